//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape mismatch; the message names the offending axis.
    #[error("dimension error: {0}")]
    Dim(String),

    /// Invalid configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Operation called in the wrong order (e.g. backward without forward).
    #[error("state error: {0}")]
    State(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// Argument outside its valid range.
    #[error("range error: {0}")]
    Range(String),

    /// Degenerate numeric state that should be surfaced, not papered over.
    #[error("numeric degeneracy: {0}")]
    Degenerate(String),

    /// Checkpoint container violations (magic, version, directory, payload).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dim(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
