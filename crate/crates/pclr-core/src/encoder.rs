//! The residual ECG encoder with global average pooling and the two-layer
//! projection head.
//!
//! At the default configuration the network is: a width-16 stem convolution
//! to 64 channels with batch norm and ReLU; four residual blocks with
//! channel widths [128, 196, 256, 320], each downsampling the length axis
//! by 4 (stride-4 on the second main-path convolution, pool-4 plus a 1x1
//! convolution on the skip path, then add, batch norm, ReLU); global
//! average pooling to a 320-dimensional embedding; and a 320-unit dense +
//! ReLU + 320-unit dense projection head used only during pre-training.
//!
//! Convolutions carry no bias; dense layers do. The `scale` rational
//! shrinks every channel width for desk-scale experiments; the default
//! `1/1` reproduces the reference architecture exactly (6,600,352
//! parameters, 6,596,624 trainable).

use crate::error::{Error, Result};
use crate::nn::kernels::Padding;
use crate::nn::layers::{BatchNorm, Conv1d, Dense, GlobalAvgPool, MaxPool1d, Relu};
use crate::nn::Parameter;
use crate::optim::{self, AdamConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EncoderConfig {
    pub input_length: usize,
    pub leads: usize,
    pub kernel_size: usize,
    pub stem_channels: usize,
    pub block_channels: Vec<usize>,
    /// Length-axis reduction per residual block.
    pub downsample: usize,
    /// Base embedding width; must equal the last block width.
    pub embed_dim: usize,
    /// Channel-width multiplier `scale_num/scale_den` for desk-scale runs.
    pub scale_num: u32,
    pub scale_den: u32,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_length: 4096,
            leads: 12,
            kernel_size: 16,
            stem_channels: 64,
            block_channels: vec![128, 196, 256, 320],
            downsample: 4,
            embed_dim: 320,
            scale_num: 1,
            scale_den: 1,
            bn_epsilon: 1e-3,
            bn_momentum: 0.99,
        }
    }
}

impl EncoderConfig {
    /// Desk-scale profile: all channel widths divided by 8. The batch-norm
    /// momentum is lowered so the moving statistics converge within the few
    /// hundred optimizer steps a desk run performs.
    pub fn desk() -> Self {
        EncoderConfig {
            scale_num: 1,
            scale_den: 8,
            bn_momentum: 0.9,
            ..Default::default()
        }
    }

    /// A channel width after applying the scale multiplier (at least 1).
    pub fn scaled(&self, width: usize) -> usize {
        let w = width as f64 * self.scale_num as f64 / self.scale_den as f64;
        (w.round() as usize).max(1)
    }

    /// Embedding width after scaling; equals the scaled last block width.
    pub fn scaled_embed_dim(&self) -> usize {
        self.scaled(self.embed_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_length == 0 || self.leads == 0 || self.kernel_size == 0 {
            return Err(Error::config("input_length, leads, kernel_size must be positive"));
        }
        if self.block_channels.is_empty() {
            return Err(Error::config("at least one residual block is required"));
        }
        if self.downsample == 0 || self.scale_num == 0 || self.scale_den == 0 {
            return Err(Error::config("downsample and scale must be positive"));
        }
        if self.embed_dim != *self.block_channels.last().unwrap() {
            return Err(Error::config(
                "embed_dim must equal the last residual block width",
            ));
        }
        if self.bn_epsilon <= 0.0 {
            return Err(Error::config("bn_epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::config("bn_momentum must lie in [0,1)"));
        }
        // The stride-4 main path and pool-4 skip path only produce equal
        // lengths when each stage length divides evenly.
        let mut l = self.input_length;
        for (i, _) in self.block_channels.iter().enumerate() {
            if l % self.downsample != 0 {
                return Err(Error::Dim(format!(
                    "block {}: length {} not divisible by downsample {}",
                    i + 1,
                    l,
                    self.downsample
                )));
            }
            l /= self.downsample;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ResidualBlock<F = f32> {
    pub conv_a: Conv1d<F>,
    pub bn_a: BatchNorm<F>,
    pub relu_a: Relu<F>,
    pub conv_b: Conv1d<F>,
    pub skip_pool: MaxPool1d<F>,
    pub skip_conv: Conv1d<F>,
    pub bn_out: BatchNorm<F>,
    pub relu_out: Relu<F>,
}

impl<F: Scalar> ResidualBlock<F> {
    fn forward_train(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let a = self.conv_a.forward_train(x)?;
        let a = self.bn_a.forward_train(&a)?;
        let a = self.relu_a.forward_train(&a);
        let mut main = self.conv_b.forward_train(&a)?;
        let skip = self.skip_pool.forward_train(x)?;
        let skip = self.skip_conv.forward_train(&skip)?;
        main.add_assign(&skip)?;
        let out = self.bn_out.forward_train(&main)?;
        Ok(self.relu_out.forward_train(&out))
    }

    fn forward_infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let a = self.conv_a.forward_infer(x)?;
        let a = self.bn_a.forward_infer(&a)?;
        let a = self.relu_a.forward_infer(&a);
        let mut main = self.conv_b.forward_infer(&a)?;
        let skip = self.skip_pool.forward_infer(x)?;
        let skip = self.skip_conv.forward_infer(&skip)?;
        main.add_assign(&skip)?;
        let out = self.bn_out.forward_infer(&main)?;
        Ok(self.relu_out.forward_infer(&out))
    }

    fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let g = self.relu_out.backward(grad_out)?;
        let g = self.bn_out.backward(&g)?;
        // The add fans the gradient out to both paths.
        let ga = self.conv_b.backward(&g)?;
        let ga = self.relu_a.backward(&ga)?;
        let ga = self.bn_a.backward(&ga)?;
        let mut gx = self.conv_a.backward(&ga)?;
        let gs = self.skip_conv.backward(&g)?;
        let gs = self.skip_pool.backward(&gs)?;
        gx.add_assign(&gs)?;
        Ok(gx)
    }
}

/// The full pre-training network plus embedded optimizer state.
#[derive(Debug, Clone)]
pub struct EncoderModel<F = f32> {
    pub config: EncoderConfig,
    pub epoch: u64,
    pub adam: AdamConfig,
    stem_conv: Conv1d<F>,
    stem_bn: BatchNorm<F>,
    stem_relu: Relu<F>,
    blocks: Vec<ResidualBlock<F>>,
    gap: GlobalAvgPool<F>,
    proj0: Dense<F>,
    proj_relu: Relu<F>,
    proj1: Dense<F>,
    grads_ready: bool,
}

/// Training ECG encoders always run in `f32`.
pub type ModelState = EncoderModel<f32>;

fn he_uniform<F: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<F> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| F::from_f64_lossy(rng.random_range(-limit..limit)))
        .collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

/// Builds a freshly initialized model. He-uniform for conv kernels and
/// dense weights, zero biases, identity batch norm. The same seed always
/// yields bitwise-identical parameters.
pub fn build_model<F: Scalar>(config: &EncoderConfig, seed: u64) -> Result<EncoderModel<F>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.kernel_size;
    let eps = config.bn_epsilon;
    let mom = config.bn_momentum;
    let ds = config.downsample;

    let stem_c = config.scaled(config.stem_channels);
    let stem_conv = Conv1d::new(
        he_uniform(&mut rng, &[k, config.leads, stem_c], k * config.leads),
        1,
        Padding::Same,
    );
    let stem_bn = BatchNorm::new(stem_c, eps, mom);

    let mut blocks = Vec::new();
    let mut c_in = stem_c;
    for &base_width in &config.block_channels {
        let c_out = config.scaled(base_width);
        let conv_a = Conv1d::new(
            he_uniform(&mut rng, &[k, c_in, c_out], k * c_in),
            1,
            Padding::Same,
        );
        let conv_b = Conv1d::new(
            he_uniform(&mut rng, &[k, c_out, c_out], k * c_out),
            ds,
            Padding::Same,
        );
        let skip_conv = Conv1d::new(he_uniform(&mut rng, &[1, c_in, c_out], c_in), 1, Padding::Same);
        blocks.push(ResidualBlock {
            conv_a,
            bn_a: BatchNorm::new(c_out, eps, mom),
            relu_a: Relu::new(),
            conv_b,
            skip_pool: MaxPool1d::new(ds, ds),
            skip_conv,
            bn_out: BatchNorm::new(c_out, eps, mom),
            relu_out: Relu::new(),
        });
        c_in = c_out;
    }

    let e = config.scaled_embed_dim();
    let proj0 = Dense::new(he_uniform(&mut rng, &[e, e], e), Tensor::zeros(&[e]));
    let proj1 = Dense::new(he_uniform(&mut rng, &[e, e], e), Tensor::zeros(&[e]));

    Ok(EncoderModel {
        config: config.clone(),
        epoch: 0,
        adam: AdamConfig::new(0.1),
        stem_conv,
        stem_bn,
        stem_relu: Relu::new(),
        blocks,
        gap: GlobalAvgPool::new(),
        proj0,
        proj_relu: Relu::new(),
        proj1,
        grads_ready: false,
    })
}

impl<F: Scalar> EncoderModel<F> {
    fn check_input(&self, batch: &Tensor<F>) -> Result<()> {
        if batch.rank() != 3
            || batch.dim(1) != self.config.input_length
            || batch.dim(2) != self.config.leads
        {
            return Err(Error::Dim(format!(
                "encoder input: expected [B, {}, {}], got {:?}",
                self.config.input_length,
                self.config.leads,
                batch.shape()
            )));
        }
        Ok(())
    }

    /// Train-mode forward to the embedding `h` (the representation used
    /// downstream). Records caches for backprop and updates BN statistics.
    pub fn encode_train(&mut self, batch: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(batch)?;
        let x = self.stem_conv.forward_train(batch)?;
        let x = self.stem_bn.forward_train(&x)?;
        let mut x = self.stem_relu.forward_train(&x);
        for block in self.blocks.iter_mut() {
            x = block.forward_train(&x)?;
        }
        self.gap.forward_train(&x)
    }

    /// Inference-mode forward to `h`; pure in the model state.
    pub fn encode_infer(&self, batch: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(batch)?;
        let x = self.stem_conv.forward_infer(batch)?;
        let x = self.stem_bn.forward_infer(&x)?;
        let mut x = self.stem_relu.forward_infer(&x);
        for block in self.blocks.iter() {
            x = block.forward_infer(&x)?;
        }
        self.gap.forward_infer(&x)
    }

    /// Projection head `z = g(h)`, train mode.
    pub fn project_train(&mut self, h: &Tensor<F>) -> Result<Tensor<F>> {
        let z = self.proj0.forward_train(h)?;
        let z = self.proj_relu.forward_train(&z);
        self.proj1.forward_train(&z)
    }

    /// Projection head, inference mode.
    pub fn project_infer(&self, h: &Tensor<F>) -> Result<Tensor<F>> {
        let z = self.proj0.forward_infer(h)?;
        let z = self.proj_relu.forward_infer(&z);
        self.proj1.forward_infer(&z)
    }

    /// Backward from a gradient on the projections, through the head and
    /// the encoder. Accumulates parameter gradients.
    pub fn backward_from_projection(&mut self, grad_z: &Tensor<F>) -> Result<()> {
        let g = self.proj1.backward(grad_z)?;
        let g = self.proj_relu.backward(&g)?;
        let g = self.proj0.backward(&g)?;
        self.backward_from_embedding(&g)
    }

    /// Backward from a gradient on the embedding `h` (used by the scratch
    /// baseline, which has no projection head in the loss path).
    pub fn backward_from_embedding(&mut self, grad_h: &Tensor<F>) -> Result<()> {
        let mut g = self.gap.backward(grad_h)?;
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g)?;
        }
        let g = self.stem_relu.backward(&g)?;
        let g = self.stem_bn.backward(&g)?;
        self.stem_conv.backward(&g)?;
        self.grads_ready = true;
        Ok(())
    }

    /// One Adam step over all trainable parameters; errors if no backward
    /// pass has populated gradients since the last step.
    pub fn adam_step(&mut self) -> Result<()> {
        if !self.grads_ready {
            return Err(Error::State(
                "adam_step called with no recorded gradients".to_string(),
            ));
        }
        let mut adam = self.adam.clone();
        {
            let mut params: Vec<&mut Parameter<F>> =
                self.params_mut().into_iter().map(|(_, p)| p).collect();
            optim::adam_step(&mut params, &mut adam)?;
        }
        self.adam = adam;
        self.grads_ready = false;
        Ok(())
    }

    /// Marks gradients as populated (for callers that fill them manually).
    pub fn set_grads_ready(&mut self) {
        self.grads_ready = true;
    }

    /// Named parameters in a fixed, construction-stable order.
    pub fn params(&self) -> Vec<(String, &Parameter<F>)> {
        let mut out: Vec<(String, &Parameter<F>)> = vec![
            ("stem.conv.kernel".to_string(), &self.stem_conv.kernel),
            ("stem.bn.gamma".to_string(), &self.stem_bn.gamma),
            ("stem.bn.beta".to_string(), &self.stem_bn.beta),
            ("stem.bn.moving_mean".to_string(), &self.stem_bn.moving_mean),
            ("stem.bn.moving_var".to_string(), &self.stem_bn.moving_var),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            let n = i + 1;
            out.push((format!("block{n}.conv_a.kernel"), &b.conv_a.kernel));
            out.push((format!("block{n}.bn_a.gamma"), &b.bn_a.gamma));
            out.push((format!("block{n}.bn_a.beta"), &b.bn_a.beta));
            out.push((format!("block{n}.bn_a.moving_mean"), &b.bn_a.moving_mean));
            out.push((format!("block{n}.bn_a.moving_var"), &b.bn_a.moving_var));
            out.push((format!("block{n}.conv_b.kernel"), &b.conv_b.kernel));
            out.push((format!("block{n}.skip_conv.kernel"), &b.skip_conv.kernel));
            out.push((format!("block{n}.bn_out.gamma"), &b.bn_out.gamma));
            out.push((format!("block{n}.bn_out.beta"), &b.bn_out.beta));
            out.push((format!("block{n}.bn_out.moving_mean"), &b.bn_out.moving_mean));
            out.push((format!("block{n}.bn_out.moving_var"), &b.bn_out.moving_var));
        }
        out.push(("projection_0.weight".to_string(), &self.proj0.weight));
        out.push(("projection_0.bias".to_string(), &self.proj0.bias));
        out.push(("projection.weight".to_string(), &self.proj1.weight));
        out.push(("projection.bias".to_string(), &self.proj1.bias));
        out
    }

    /// Mutable named parameters in the same order as [`Self::params`].
    pub fn params_mut(&mut self) -> Vec<(String, &mut Parameter<F>)> {
        let mut out: Vec<(String, &mut Parameter<F>)> = vec![
            ("stem.conv.kernel".to_string(), &mut self.stem_conv.kernel),
            ("stem.bn.gamma".to_string(), &mut self.stem_bn.gamma),
            ("stem.bn.beta".to_string(), &mut self.stem_bn.beta),
            ("stem.bn.moving_mean".to_string(), &mut self.stem_bn.moving_mean),
            ("stem.bn.moving_var".to_string(), &mut self.stem_bn.moving_var),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let n = i + 1;
            out.push((format!("block{n}.conv_a.kernel"), &mut b.conv_a.kernel));
            out.push((format!("block{n}.bn_a.gamma"), &mut b.bn_a.gamma));
            out.push((format!("block{n}.bn_a.beta"), &mut b.bn_a.beta));
            out.push((format!("block{n}.bn_a.moving_mean"), &mut b.bn_a.moving_mean));
            out.push((format!("block{n}.bn_a.moving_var"), &mut b.bn_a.moving_var));
            out.push((format!("block{n}.conv_b.kernel"), &mut b.conv_b.kernel));
            out.push((format!("block{n}.skip_conv.kernel"), &mut b.skip_conv.kernel));
            out.push((format!("block{n}.bn_out.gamma"), &mut b.bn_out.gamma));
            out.push((format!("block{n}.bn_out.beta"), &mut b.bn_out.beta));
            out.push((format!("block{n}.bn_out.moving_mean"), &mut b.bn_out.moving_mean));
            out.push((format!("block{n}.bn_out.moving_var"), &mut b.bn_out.moving_var));
        }
        out.push(("projection_0.weight".to_string(), &mut self.proj0.weight));
        out.push(("projection_0.bias".to_string(), &mut self.proj0.bias));
        out.push(("projection.weight".to_string(), &mut self.proj1.weight));
        out.push(("projection.bias".to_string(), &mut self.proj1.bias));
        out
    }

    /// (total, trainable, non-trainable) parameter counts.
    pub fn parameter_counts(&self) -> (usize, usize, usize) {
        let mut trainable = 0;
        let mut frozen = 0;
        for (_, p) in self.params() {
            if p.trainable {
                trainable += p.value.len();
            } else {
                frozen += p.value.len();
            }
        }
        (trainable + frozen, trainable, frozen)
    }

    /// Per-layer (name, per-sample output shape, parameter count), in
    /// network order, for structural checks against the reference listing.
    pub fn layer_summary(&self) -> Vec<(String, Vec<usize>, usize)> {
        let cfg = &self.config;
        let mut rows = Vec::new();
        let mut l = cfg.input_length;
        let stem_c = cfg.scaled(cfg.stem_channels);
        rows.push((
            "stem.conv".to_string(),
            vec![l, stem_c],
            self.stem_conv.kernel.value.len(),
        ));
        rows.push(("stem.bn".to_string(), vec![l, stem_c], 4 * stem_c));
        let mut c_in = stem_c;
        for (i, &w) in cfg.block_channels.iter().enumerate() {
            let n = i + 1;
            let c = cfg.scaled(w);
            rows.push((
                format!("block{n}.conv_a"),
                vec![l, c],
                self.blocks[i].conv_a.kernel.value.len(),
            ));
            rows.push((format!("block{n}.bn_a"), vec![l, c], 4 * c));
            let l_out = l / cfg.downsample;
            rows.push((
                format!("block{n}.conv_b"),
                vec![l_out, c],
                self.blocks[i].conv_b.kernel.value.len(),
            ));
            rows.push((format!("block{n}.skip_pool"), vec![l_out, c_in], 0));
            rows.push((
                format!("block{n}.skip_conv"),
                vec![l_out, c],
                self.blocks[i].skip_conv.kernel.value.len(),
            ));
            rows.push((format!("block{n}.bn_out"), vec![l_out, c], 4 * c));
            l = l_out;
            c_in = c;
        }
        let e = cfg.scaled_embed_dim();
        rows.push(("embed".to_string(), vec![e], 0));
        rows.push((
            "projection_0".to_string(),
            vec![e],
            self.proj0.weight.value.len() + self.proj0.bias.value.len(),
        ));
        rows.push((
            "projection".to_string(),
            vec![e],
            self.proj1.weight.value.len() + self.proj1.bias.value.len(),
        ));
        rows
    }

    /// Mirrors the model into another element type (used by f64 test
    /// oracles). Caches are not copied.
    pub fn cast<G: Scalar>(&self) -> EncoderModel<G> {
        let mut target: EncoderModel<G> =
            build_model(&self.config, 0).expect("config already validated");
        target.epoch = self.epoch;
        target.adam = self.adam.clone();
        let src = self.params();
        for ((_, sp), (_, tp)) in src.into_iter().zip(target.params_mut()) {
            *tp = sp.cast();
        }
        target
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_counts_match_reference_totals() {
        let model: EncoderModel<f32> = build_model(&EncoderConfig::default(), 0).unwrap();
        let (total, trainable, frozen) = model.parameter_counts();
        assert_eq!(total, 6_600_352);
        assert_eq!(trainable, 6_596_624);
        assert_eq!(frozen, 3_728);
    }

    #[test]
    fn block1_skip_conv_param_count() {
        let model: EncoderModel<f32> = build_model(&EncoderConfig::default(), 0).unwrap();
        let p = model
            .params()
            .into_iter()
            .find(|(n, _)| n == "block1.skip_conv.kernel")
            .unwrap()
            .1
            .value
            .len();
        assert_eq!(p, 8_192);
    }

    #[test]
    fn projection_head_param_count() {
        let model: EncoderModel<f32> = build_model(&EncoderConfig::default(), 0).unwrap();
        let head: usize = model
            .params()
            .into_iter()
            .filter(|(n, _)| n.starts_with("projection"))
            .map(|(_, p)| p.value.len())
            .sum();
        assert_eq!(head, 205_440);
        let summary = model.layer_summary();
        let p0 = summary.iter().find(|(n, _, _)| n == "projection_0").unwrap();
        assert_eq!(p0.2, 102_720);
    }

    #[test]
    fn encode_shape_and_purity() {
        let cfg = EncoderConfig {
            input_length: 256,
            ..EncoderConfig::desk()
        };
        let model: EncoderModel<f32> = build_model(&cfg, 3).unwrap();
        let e = cfg.scaled_embed_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let row: Vec<f32> = (0..256 * 12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut data = row.clone();
        data.extend_from_slice(&row);
        let batch = Tensor::from_vec(&[2, 256, 12], data).unwrap();
        let h = model.encode_infer(&batch).unwrap();
        assert_eq!(h.shape(), &[2, e]);
        // Duplicated rows embed identically.
        assert_eq!(&h.data()[..e], &h.data()[e..]);
        let z = model.project_infer(&h).unwrap();
        assert_eq!(&z.data()[..e], &z.data()[e..]);
    }

    #[test]
    fn zero_input_fresh_bn_gives_finite_output() {
        let cfg = EncoderConfig {
            input_length: 256,
            ..EncoderConfig::desk()
        };
        let model: EncoderModel<f32> = build_model(&cfg, 0).unwrap();
        let batch = Tensor::zeros(&[1, 256, 12]);
        let h = model.encode_infer(&batch).unwrap();
        h.check_finite("embedding").unwrap();
    }

    #[test]
    fn adam_step_without_backward_is_a_state_error() {
        let cfg = EncoderConfig {
            input_length: 256,
            ..EncoderConfig::desk()
        };
        let mut model: EncoderModel<f32> = build_model(&cfg, 0).unwrap();
        assert!(matches!(model.adam_step(), Err(Error::State(_))));
    }

    #[test]
    fn same_seed_builds_identical_models() {
        let cfg = EncoderConfig::desk();
        let a: EncoderModel<f32> = build_model(&cfg, 42).unwrap();
        let b: EncoderModel<f32> = build_model(&cfg, 42).unwrap();
        for ((_, pa), (_, pb)) in a.params().into_iter().zip(b.params()) {
            assert_eq!(pa.value.data(), pb.value.data());
        }
    }

    #[test]
    fn bad_input_shape_names_the_problem() {
        let model: EncoderModel<f32> = build_model(&EncoderConfig::default(), 0).unwrap();
        let batch = Tensor::zeros(&[1, 100, 12]);
        assert!(matches!(model.encode_infer(&batch), Err(Error::Dim(_))));
    }
}
