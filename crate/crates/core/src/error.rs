//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("grid mismatch: {left} bins vs {right} bins")]
    GridMismatch { left: usize, right: usize },

    #[error("dynamics evaluation failed: {0}")]
    Dynamics(String),

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    FeatureDim { expected: usize, got: usize },

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("planning failed: {0}")]
    Planning(String),

    /// A configuration value is invalid; `key` is the dotted config path.
    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
