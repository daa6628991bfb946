use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SeaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SeaError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("world generation failed for seed {seed}: {reason}")]
    Generation { seed: u64, reason: String },

    #[error("unsupported schema version {found} (expected {expected})")]
    Schema { found: u32, expected: u32 },

    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl SeaError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        SeaError::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SeaError::Io { path: path.into(), source }
    }
}
