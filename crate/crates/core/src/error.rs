use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance is not positive-definite after regularization (dimension {dim})")]
    SingularCovariance { dim: usize },

    #[error("history holds {got} frames but the lag order needs {needed}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("frame {index} has a non-finite component")]
    InvalidFrame { index: usize },

    #[error("training failed: {0}")]
    Training(String),

    #[error("no training runs for movement label {label}")]
    MissingMovement { label: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("generator error: {0}")]
    Generator(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
