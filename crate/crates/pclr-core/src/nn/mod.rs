//! Neural-network building blocks: forward/backward kernels and layers.

pub mod kernels;
pub mod layers;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A model weight with its gradient and Adam moments.
///
/// Non-trainable parameters (batch-norm moving statistics) carry
/// zero-length gradient and moment buffers.
#[derive(Debug, Clone)]
pub struct Parameter<F = f32> {
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    pub m: Tensor<F>,
    pub v: Tensor<F>,
    pub trainable: bool,
}

impl<F: Scalar> Parameter<F> {
    pub fn trainable(value: Tensor<F>) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            value,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            trainable: true,
        }
    }

    pub fn frozen(value: Tensor<F>) -> Self {
        Parameter {
            value,
            grad: Tensor::empty(),
            m: Tensor::empty(),
            v: Tensor::empty(),
            trainable: false,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    pub fn cast<G: Scalar>(&self) -> Parameter<G> {
        Parameter {
            value: self.value.cast(),
            grad: self.grad.cast(),
            m: self.m.cast(),
            v: self.v.cast(),
            trainable: self.trainable,
        }
    }
}
