use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("invalid layout{}: {message}", source_id.map(|id| format!(" (source {id})")).unwrap_or_default())]
    Validation { source_id: Option<u32>, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("solver failed on sample {index}: {message}")]
    SampleFailed { index: u64, message: String },

    #[error("bad dataset file: {0}")]
    Format(String),

    #[error("dataset truncated: expected {expected} samples, payload ended after {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("layout hash mismatch: {0}")]
    LayoutMismatch(String),

    #[error("component mask is empty; CMAE is undefined")]
    EmptyMask,

    #[error("singular kriging system: {0}")]
    SingularKriging(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    RawIo(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(source_id: Option<u32>, message: impl Into<String>) -> Self {
        Error::Validation {
            source_id,
            message: message.into(),
        }
    }
}
