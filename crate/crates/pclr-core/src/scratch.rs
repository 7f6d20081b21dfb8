//! Supervised scratch-training baseline: the same encoder, randomly
//! initialized, followed by a linear fully connected head. The
//! classification head emits two values trained with categorical
//! cross-entropy; the regression head emits one value trained with mean
//! squared error (on normalized targets). Adam at 1e-3, early stopping
//! when validation loss has not improved for `patience` epochs, and the
//! minimum-validation-loss checkpoint is the one evaluated.

use crate::encoder::{build_model, EncoderConfig, ModelState};
use crate::error::{Error, Result};
use crate::lineval::Task;
use crate::nn::layers::Dense;
use crate::optim::{adam_step, AdamConfig};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScratchConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for ScratchConfig {
    fn default() -> Self {
        ScratchConfig {
            batch_size: 64,
            learning_rate: 1e-3,
            patience: 5,
            max_epochs: 50,
            seed: 0,
        }
    }
}

/// Prepared waveform rows with targets and patient identity.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    /// Each row is a flattened `input_length x leads` matrix.
    pub rows: Vec<Vec<f32>>,
    pub targets: Vec<f64>,
    pub patient_ids: Vec<String>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn batch(&self, indices: &[usize], input_len: usize, leads: usize) -> Result<Tensor<f32>> {
        let mut data = Vec::with_capacity(indices.len() * input_len * leads);
        for &i in indices {
            if self.rows[i].len() != input_len * leads {
                return Err(Error::dim(format!(
                    "row {i} has {} values, expected {}",
                    self.rows[i].len(),
                    input_len * leads
                )));
            }
            data.extend_from_slice(&self.rows[i]);
        }
        Tensor::from_vec(&[indices.len(), input_len, leads], data)
    }
}

/// Encoder plus linear head and its optimizer state.
#[derive(Debug, Clone)]
pub struct ScratchModel {
    pub encoder: ModelState,
    pub head: Dense<f32>,
    pub head_adam: AdamConfig,
    pub task: Task,
    pub target_mean: f64,
    pub target_std: f64,
}

impl ScratchModel {
    pub fn new(config: &EncoderConfig, task: Task, lr: f64, seed: u64) -> Result<Self> {
        let mut encoder = build_model(config, seed)?;
        encoder.adam = AdamConfig::new(lr);
        let d = config.scaled_embed_dim();
        let out = match task {
            Task::Classification => 2,
            Task::Regression => 1,
        };
        // He-uniform head init from a stream disjoint from the encoder's.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5343_5241_5443_4845);
        let bound = (6.0 / d as f64).sqrt() as f32;
        let weight: Vec<f32> = (0..d * out).map(|_| rng.random_range(-bound..bound)).collect();
        let head = Dense::new(
            Tensor::from_vec(&[d, out], weight)?,
            Tensor::zeros(&[out]),
        );
        Ok(ScratchModel {
            encoder,
            head,
            head_adam: AdamConfig::new(lr),
            task,
            target_mean: 0.0,
            target_std: 1.0,
        })
    }

    /// Scores in inference mode: class-1 probability for classification,
    /// original-unit predictions for regression.
    pub fn predict(&self, batch: &Tensor<f32>) -> Result<Vec<f64>> {
        let h = self.encoder.encode_infer(batch)?;
        let out = self.head.forward_infer(&h)?;
        let b = out.dim(0);
        let mut scores = Vec::with_capacity(b);
        match self.task {
            Task::Classification => {
                for i in 0..b {
                    let z0 = out.data()[i * 2] as f64;
                    let z1 = out.data()[i * 2 + 1] as f64;
                    let m = z0.max(z1);
                    let e0 = (z0 - m).exp();
                    let e1 = (z1 - m).exp();
                    scores.push(e1 / (e0 + e1));
                }
            }
            Task::Regression => {
                for i in 0..b {
                    scores.push(out.data()[i] as f64 * self.target_std + self.target_mean);
                }
            }
        }
        Ok(scores)
    }
}

/// Mean loss and per-logit gradient for one output batch.
fn loss_and_grad(
    out: &Tensor<f32>,
    targets: &[f64],
    task: Task,
) -> Result<(f64, Tensor<f32>)> {
    let b = out.dim(0);
    let mut grad = Tensor::zeros(out.shape());
    let mut loss = 0.0f64;
    match task {
        Task::Classification => {
            for i in 0..b {
                let z0 = out.data()[i * 2] as f64;
                let z1 = out.data()[i * 2 + 1] as f64;
                let m = z0.max(z1);
                let e0 = (z0 - m).exp();
                let e1 = (z1 - m).exp();
                let sum = e0 + e1;
                let (p0, p1) = (e0 / sum, e1 / sum);
                let y1 = targets[i] > 0.5;
                loss -= if y1 { p1.ln() } else { p0.ln() };
                grad.data_mut()[i * 2] = ((p0 - f64::from(!y1 as u8)) / b as f64) as f32;
                grad.data_mut()[i * 2 + 1] = ((p1 - f64::from(y1 as u8)) / b as f64) as f32;
            }
        }
        Task::Regression => {
            for i in 0..b {
                let r = out.data()[i] as f64 - targets[i];
                loss += r * r;
                grad.data_mut()[i] = (2.0 * r / b as f64) as f32;
            }
        }
    }
    Ok((loss / b as f64, grad))
}

fn mean_loss_infer(model: &ScratchModel, set: &LabeledSet, cfg: &ScratchConfig) -> Result<f64> {
    let input_len = model.encoder.config.input_length;
    let leads = model.encoder.config.leads;
    let targets = normalized_targets(model, set);
    let mut total = 0.0;
    let mut count = 0usize;
    let indices: Vec<usize> = (0..set.len()).collect();
    for chunk in indices.chunks(cfg.batch_size) {
        let x = set.batch(chunk, input_len, leads)?;
        let h = model.encoder.encode_infer(&x)?;
        let out = model.head.forward_infer(&h)?;
        let t: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
        let (loss, _) = loss_and_grad(&out, &t, model.task)?;
        total += loss * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count as f64)
}

fn normalized_targets(model: &ScratchModel, set: &LabeledSet) -> Vec<f64> {
    match model.task {
        Task::Classification => set.targets.clone(),
        Task::Regression => set
            .targets
            .iter()
            .map(|t| (t - model.target_mean) / model.target_std)
            .collect(),
    }
}

pub fn assert_patient_disjoint(train: &LabeledSet, val: &LabeledSet) -> Result<()> {
    let train_pids: HashSet<&str> = train.patient_ids.iter().map(String::as_str).collect();
    for pid in &val.patient_ids {
        if train_pids.contains(pid.as_str()) {
            return Err(Error::data(format!(
                "patient '{pid}' appears in both the training and validation splits"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ScratchEpoch {
    pub epoch: u64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug)]
pub struct ScratchOutcome {
    /// The minimum-validation-loss model.
    pub best: ScratchModel,
    pub best_epoch: u64,
    pub history: Vec<ScratchEpoch>,
}

/// Trains encoder+head from random init, early-stopping on validation
/// loss. Train/validation must be patient-disjoint.
pub fn scratch_train(
    encoder_config: &EncoderConfig,
    task: Task,
    config: &ScratchConfig,
    train: &LabeledSet,
    val: &LabeledSet,
) -> Result<ScratchOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::data("scratch training needs non-empty train and validation sets"));
    }
    assert_patient_disjoint(train, val)?;
    let mut model = ScratchModel::new(encoder_config, task, config.learning_rate, config.seed)?;
    if task == Task::Regression {
        let n = train.targets.len() as f64;
        let mean = train.targets.iter().sum::<f64>() / n;
        let var = train.targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        model.target_mean = mean;
        model.target_std = if var > 0.0 { var.sqrt() } else { 1.0 };
    } else {
        let pos = train.targets.iter().filter(|&&t| t > 0.5).count();
        if pos == 0 || pos == train.len() {
            return Err(Error::data("classification training set has a single class"));
        }
    }
    let input_len = encoder_config.input_length;
    let leads = encoder_config.leads;
    let targets = normalized_targets(&model, train);

    let mut best: Option<(f64, u64, ScratchModel)> = None;
    let mut history = Vec::new();
    for epoch in 0..config.max_epochs as u64 {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let x = train.batch(chunk, input_len, leads)?;
            let h = model.encoder.encode_train(&x)?;
            let out = model.head.forward_train(&h)?;
            let t: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let (loss, grad_out) = loss_and_grad(&out, &t, model.task)?;
            train_loss += loss * chunk.len() as f64;
            seen += chunk.len();
            let grad_h = model.head.backward(&grad_out)?;
            model.encoder.backward_from_embedding(&grad_h)?;
            model.encoder.adam_step()?;
            adam_step(
                &mut [&mut model.head.weight, &mut model.head.bias],
                &mut model.head_adam,
            )?;
        }
        let train_loss = train_loss / seen as f64;
        let val_loss = mean_loss_infer(&model, val, config)?;
        history.push(ScratchEpoch {
            epoch,
            train_loss,
            val_loss,
        });
        let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, epoch, model.clone()));
        } else if let Some((_, best_epoch, _)) = &best {
            if epoch - *best_epoch >= config.patience as u64 {
                break;
            }
        }
    }
    let (_, best_epoch, best_model) = best.unwrap();
    Ok(ScratchOutcome {
        best: best_model,
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_encoder() -> EncoderConfig {
        EncoderConfig {
            input_length: 256,
            ..EncoderConfig::desk()
        }
    }

    /// Two-class toy set: class decides the amplitude of a fixed pattern.
    fn toy_set(n: usize, seed: u64, patient_prefix: &str) -> LabeledSet {
        let cfg = tiny_encoder();
        let len = cfg.input_length * cfg.leads;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        let mut patient_ids = Vec::new();
        for i in 0..n {
            let class = i % 2;
            let amp = if class == 1 { 3.0f32 } else { 0.2 };
            let row: Vec<f32> = (0..len)
                .map(|k| amp * ((k % 97) as f32 * 0.21).sin() + 0.05 * rng.random::<f32>())
                .collect();
            rows.push(row);
            targets.push(class as f64);
            patient_ids.push(format!("{patient_prefix}{i}"));
        }
        LabeledSet {
            rows,
            targets,
            patient_ids,
        }
    }

    #[test]
    fn overlapping_patients_are_refused() {
        let a = toy_set(4, 0, "p");
        let b = toy_set(4, 1, "p");
        let err = scratch_train(
            &tiny_encoder(),
            Task::Classification,
            &ScratchConfig::default(),
            &a,
            &b,
        )
        .unwrap_err();
        assert!(err.to_string().contains("both the training and validation"), "{err}");
    }

    #[test]
    fn learns_separable_classes_and_early_stops() {
        let train = toy_set(16, 0, "tr");
        let val = toy_set(8, 1, "va");
        let cfg = ScratchConfig {
            batch_size: 8,
            max_epochs: 30,
            patience: 5,
            seed: 3,
            ..ScratchConfig::default()
        };
        let out = scratch_train(&tiny_encoder(), Task::Classification, &cfg, &train, &val).unwrap();
        // Early-stop contract: at most best_epoch + patience + 1 epochs ran.
        let last = out.history.last().unwrap().epoch;
        assert!(last <= out.best_epoch + cfg.patience as u64);
        // The best model separates the validation classes.
        let x = val
            .batch(&(0..val.len()).collect::<Vec<_>>(), 256, 12)
            .unwrap();
        let scores = out.best.predict(&x).unwrap();
        let pos: Vec<f64> = scores
            .iter()
            .zip(&val.targets)
            .filter(|(_, &t)| t > 0.5)
            .map(|(s, _)| *s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(&val.targets)
            .filter(|(_, &t)| t <= 0.5)
            .map(|(s, _)| *s)
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&pos) > mean(&neg), "{:?} vs {:?}", pos, neg);
    }

    #[test]
    fn regression_head_recovers_target_scale() {
        let cfg_enc = tiny_encoder();
        let len = cfg_enc.input_length * cfg_enc.leads;
        let make = |n: usize, prefix: &str, seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows = Vec::new();
            let mut targets = Vec::new();
            let mut pids = Vec::new();
            for i in 0..n {
                let t = (i % 5) as f64; // target encoded as amplitude
                let row: Vec<f32> = (0..len)
                    .map(|k| (0.5 + t as f32) * ((k % 61) as f32 * 0.3).cos()
                        + 0.02 * rng.random::<f32>())
                    .collect();
                rows.push(row);
                targets.push(40.0 + 10.0 * t);
                pids.push(format!("{prefix}{i}"));
            }
            LabeledSet { rows, targets, patient_ids: pids }
        };
        let train = make(20, "tr", 0);
        let val = make(10, "va", 1);
        let cfg = ScratchConfig {
            batch_size: 10,
            max_epochs: 10,
            patience: 3,
            seed: 5,
            ..ScratchConfig::default()
        };
        let out = scratch_train(&cfg_enc, Task::Regression, &cfg, &train, &val).unwrap();
        assert!(out.history.last().unwrap().val_loss < out.history[0].val_loss);
        // Predictions come back in original units, not normalized ones.
        let x = val.batch(&[0, 4], 256, 12).unwrap();
        let preds = out.best.predict(&x).unwrap();
        assert!(preds.iter().all(|p| (0.0..120.0).contains(p)), "{preds:?}");
    }

    #[test]
    fn single_class_training_set_is_an_error() {
        let mut train = toy_set(8, 0, "tr");
        train.targets.iter_mut().for_each(|t| *t = 1.0);
        let val = toy_set(4, 1, "va");
        let err = scratch_train(
            &tiny_encoder(),
            Task::Classification,
            &ScratchConfig::default(),
            &train,
            &val,
        )
        .unwrap_err();
        assert!(err.to_string().contains("single class"), "{err}");
    }
}
