//! Stateful layers wrapping the kernels with caches for backprop.
//!
//! `forward_train` records what backward needs; `forward_infer` is pure and
//! takes `&self`. Calling `backward` without a matching `forward_train` is
//! a state error. Parameter gradients accumulate until the optimizer step
//! zeroes them.

use crate::error::{Error, Result};
use crate::nn::kernels::{self, BnCache, Padding};
use crate::nn::Parameter;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Conv1d<F = f32> {
    pub kernel: Parameter<F>,
    pub stride: usize,
    pub padding: Padding,
    cache: Option<Tensor<F>>,
}

impl<F: Scalar> Conv1d<F> {
    pub fn new(kernel: Tensor<F>, stride: usize, padding: Padding) -> Self {
        Conv1d {
            kernel: Parameter::trainable(kernel),
            stride,
            padding,
            cache: None,
        }
    }

    pub fn forward_train(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let out = kernels::conv1d_forward(input, &self.kernel.value, self.stride, self.padding)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    pub fn forward_infer(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        kernels::conv1d_forward(input, &self.kernel.value, self.stride, self.padding)
    }

    pub fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let input = self
            .cache
            .take()
            .ok_or_else(|| Error::State("conv1d backward without forward".to_string()))?;
        let (gin, gker) =
            kernels::conv1d_backward(&input, &self.kernel.value, self.stride, self.padding, grad_out)?;
        self.kernel.grad.add_assign(&gker)?;
        Ok(gin)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm<F = f32> {
    pub gamma: Parameter<F>,
    pub beta: Parameter<F>,
    pub moving_mean: Parameter<F>,
    pub moving_var: Parameter<F>,
    pub epsilon: f64,
    pub momentum: f64,
    cache: Option<BnCache<F>>,
}

impl<F: Scalar> BatchNorm<F> {
    pub fn new(channels: usize, epsilon: f64, momentum: f64) -> Self {
        BatchNorm {
            gamma: Parameter::trainable(Tensor::filled(&[channels], F::one())),
            beta: Parameter::trainable(Tensor::zeros(&[channels])),
            moving_mean: Parameter::frozen(Tensor::zeros(&[channels])),
            moving_var: Parameter::frozen(Tensor::filled(&[channels], F::one())),
            epsilon,
            momentum,
            cache: None,
        }
    }

    pub fn forward_train(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let (out, cache, mean, var) = kernels::batchnorm_forward_train(
            input,
            &self.gamma.value,
            &self.beta.value,
            self.epsilon,
        )?;
        let mom = F::from_f64_lossy(self.momentum);
        let one_m = F::one() - mom;
        for (mv, &bm) in self.moving_mean.value.data_mut().iter_mut().zip(mean.iter()) {
            *mv = mom * *mv + one_m * bm;
        }
        for (vv, &bv) in self.moving_var.value.data_mut().iter_mut().zip(var.iter()) {
            *vv = mom * *vv + one_m * bv;
        }
        self.cache = Some(cache);
        Ok(out)
    }

    pub fn forward_infer(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        kernels::batchnorm_forward_infer(
            input,
            &self.gamma.value,
            &self.beta.value,
            &self.moving_mean.value,
            &self.moving_var.value,
            self.epsilon,
        )
    }

    pub fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("batch-norm backward without forward".to_string()))?;
        let (gin, dgamma, dbeta) = kernels::batchnorm_backward(grad_out, &self.gamma.value, &cache)?;
        for (g, d) in self.gamma.grad.data_mut().iter_mut().zip(dgamma) {
            *g += d;
        }
        for (g, d) in self.beta.grad.data_mut().iter_mut().zip(dbeta) {
            *g += d;
        }
        Ok(gin)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu<F = f32> {
    mask: Option<Vec<bool>>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Scalar> Relu<F> {
    pub fn new() -> Self {
        Relu {
            mask: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward_train(&mut self, input: &Tensor<F>) -> Tensor<F> {
        let (out, mask) = kernels::relu_forward(input);
        self.mask = Some(mask);
        out
    }

    pub fn forward_infer(&self, input: &Tensor<F>) -> Tensor<F> {
        kernels::relu_forward(input).0
    }

    pub fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let mask = self
            .mask
            .take()
            .ok_or_else(|| Error::State("relu backward without forward".to_string()))?;
        kernels::relu_backward(grad_out, &mask)
    }
}

#[derive(Debug, Clone)]
pub struct MaxPool1d<F = f32> {
    pub pool: usize,
    pub stride: usize,
    cache: Option<(Vec<usize>, Vec<u32>)>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Scalar> MaxPool1d<F> {
    pub fn new(pool: usize, stride: usize) -> Self {
        MaxPool1d {
            pool,
            stride,
            cache: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward_train(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let (out, arg) = kernels::maxpool1d_forward(input, self.pool, self.stride)?;
        self.cache = Some((input.shape().to_vec(), arg));
        Ok(out)
    }

    pub fn forward_infer(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(kernels::maxpool1d_forward(input, self.pool, self.stride)?.0)
    }

    pub fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let (shape, arg) = self
            .cache
            .take()
            .ok_or_else(|| Error::State("max-pool backward without forward".to_string()))?;
        kernels::maxpool1d_backward(grad_out, &arg, &shape)
    }
}

#[derive(Debug, Clone)]
pub struct GlobalAvgPool<F = f32> {
    cache_len: Option<usize>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Scalar> GlobalAvgPool<F> {
    pub fn new() -> Self {
        GlobalAvgPool {
            cache_len: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward_train(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        self.cache_len = Some(input.dim(1));
        kernels::global_avg_pool(input)
    }

    pub fn forward_infer(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        kernels::global_avg_pool(input)
    }

    pub fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let l = self
            .cache_len
            .take()
            .ok_or_else(|| Error::State("global-avg-pool backward without forward".to_string()))?;
        kernels::global_avg_pool_backward(grad_out, l)
    }
}

impl<F: Scalar> Default for GlobalAvgPool<F> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone)]
pub struct Dense<F = f32> {
    pub weight: Parameter<F>,
    pub bias: Parameter<F>,
    cache: Option<Tensor<F>>,
}

impl<F: Scalar> Dense<F> {
    pub fn new(weight: Tensor<F>, bias: Tensor<F>) -> Self {
        Dense {
            weight: Parameter::trainable(weight),
            bias: Parameter::trainable(bias),
            cache: None,
        }
    }

    pub fn forward_train(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let out = kernels::dense_forward(input, &self.weight.value, &self.bias.value)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    pub fn forward_infer(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        kernels::dense_forward(input, &self.weight.value, &self.bias.value)
    }

    pub fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let input = self
            .cache
            .take()
            .ok_or_else(|| Error::State("dense backward without forward".to_string()))?;
        let (gin, gw, gb) = kernels::dense_backward(&input, &self.weight.value, grad_out)?;
        self.weight.grad.add_assign(&gw)?;
        self.bias.grad.add_assign(&gb)?;
        Ok(gin)
    }
}
