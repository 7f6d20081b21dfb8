//! Adam optimizer and the half-period cosine learning-rate schedule.

use crate::error::{Error, Result};
use crate::nn::Parameter;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Adam hyperparameters plus the shared step counter.
///
/// `step_count` increments by exactly one per [`adam_step`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            step_count: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in (0,1)"));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::config("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update over the given trainable parameters.
///
/// Gradients are zeroed after the step. Frozen parameters are skipped.
pub fn adam_step<F: Scalar>(params: &mut [&mut Parameter<F>], config: &mut AdamConfig) -> Result<()> {
    config.validate()?;
    config.step_count += 1;
    let t = config.step_count as i32;
    let b1 = F::from_f64_lossy(config.beta1);
    let b2 = F::from_f64_lossy(config.beta2);
    let one = F::one();
    let lr = F::from_f64_lossy(config.learning_rate);
    let eps = F::from_f64_lossy(config.epsilon);
    let corr1 = one - b1.powi(t);
    let corr2 = one - b2.powi(t);
    for p in params.iter_mut() {
        if !p.trainable {
            continue;
        }
        let g = p.grad.data();
        let m = p.m.data_mut();
        let v = p.v.data_mut();
        let w = p.value.data_mut();
        for i in 0..g.len() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            w[i] = w[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        p.zero_grad();
    }
    Ok(())
}

/// Half-period cosine decay: `base_lr * (1 + cos(pi * epoch / total)) / 2`.
pub fn cosine_lr(base_lr: f64, epoch: u64, total_epochs: u64) -> Result<f64> {
    if base_lr <= 0.0 {
        return Err(Error::config("base learning rate must be positive"));
    }
    if total_epochs == 0 {
        return Err(Error::config("total epochs must be positive"));
    }
    if epoch > total_epochs {
        return Err(Error::Range(format!(
            "epoch {epoch} exceeds schedule length {total_epochs}"
        )));
    }
    Ok(base_lr * (1.0 + (std::f64::consts::PI * epoch as f64 / total_epochs as f64).cos()) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn cosine_schedule_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0.1, 0, 50).unwrap(), 0.1);
        assert!((cosine_lr(0.1, 25, 50).unwrap() - 0.05).abs() < 1e-15);
        assert!(cosine_lr(0.1, 50, 50).unwrap().abs() < 1e-17);
        assert!(cosine_lr(0.1, 51, 50).is_err());
    }

    #[test]
    fn cosine_schedule_is_non_increasing() {
        let mut prev = f64::INFINITY;
        for e in 0..=50 {
            let lr = cosine_lr(0.1, e, 50).unwrap();
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut p = Parameter::<f32>::trainable(Tensor::filled(&[3], 2.0));
        let mut cfg = AdamConfig::new(0.1);
        adam_step(&mut [&mut p], &mut cfg).unwrap();
        assert_eq!(p.value.data(), &[2.0, 2.0, 2.0]);
        assert_eq!(cfg.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // Bias correction makes the first step lr * g / (|g| + eps').
        let mut p = Parameter::<f32>::trainable(Tensor::zeros(&[1]));
        p.grad.data_mut()[0] = 1.0;
        let mut cfg = AdamConfig::new(0.1);
        adam_step(&mut [&mut p], &mut cfg).unwrap();
        assert!((p.value.data()[0] + 0.1).abs() < 1e-4);
        // Gradient zeroed after the step.
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn identical_gradient_streams_give_identical_trajectories() {
        let mut a = Parameter::<f32>::trainable(Tensor::filled(&[2], 0.5));
        let mut b = a.clone();
        let mut ca = AdamConfig::new(0.01);
        let mut cb = AdamConfig::new(0.01);
        for step in 0..20 {
            let g = (step as f32 * 0.3).sin();
            a.grad.data_mut().iter_mut().for_each(|x| *x = g);
            b.grad.data_mut().iter_mut().for_each(|x| *x = g);
            adam_step(&mut [&mut a], &mut ca).unwrap();
            adam_step(&mut [&mut b], &mut cb).unwrap();
        }
        assert_eq!(a.value.data(), b.value.data());
    }
}
