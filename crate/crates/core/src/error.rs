use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, StarError>;

#[derive(Debug, Error)]
pub enum StarError {
    /// STAR pairing needs at least two samples per batch.
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    /// Shapes or values violate an operation's contract.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("ingestion error for sample `{id}`: {reason}")]
    Ingestion { id: String, reason: String },
    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
    #[error("mask `{id}` is not binary: found value {value}")]
    NonBinaryMask { id: String, value: u8 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("non-finite loss at step {step}: seg={seg}, change={change}")]
    NonFinite { step: usize, seg: f64, change: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl StarError {
    pub fn class(&self) -> ErrorClass {
        match self {
            StarError::InvalidBatch(_) | StarError::Config(_) | StarError::Contract(_) => ErrorClass::Config,
            StarError::NonFinite { .. } => ErrorClass::Numeric,
            StarError::Ingestion { .. }
            | StarError::EmptyDataset(_)
            | StarError::NonBinaryMask { .. }
            | StarError::Checkpoint(_)
            | StarError::Io { .. }
            | StarError::Image { .. }
            | StarError::Json(_) => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StarError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        StarError::Contract(msg.into())
    }
}
