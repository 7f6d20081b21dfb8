//! Patient-contrastive representation learning for 12-lead ECGs.
//!
//! The crate covers the full pipeline: raw waveform preprocessing, a small
//! CPU tensor/layer stack with hand-written backward kernels, the residual
//! ECG encoder with projection head, NT-Xent contrastive pre-training,
//! a synthetic cohort generator, and ridge / logistic-ridge linear probes.
//!
//! Training arithmetic is `f32`; every kernel is generic over the element
//! type so tests can run the identical code paths in `f64`.
//!
//! With the default `parallel` feature, batch-level loops run on rayon.
//! Reductions keep a fixed order, so results are bitwise identical with
//! the feature disabled.

pub mod checkpoint;
pub mod contrastive;
pub mod data;
pub mod encoder;
pub mod error;
pub mod lineval;
pub mod nn;
pub mod optim;
pub mod par;
pub mod scalar;
pub mod scratch;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
