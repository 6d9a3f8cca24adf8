use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PanoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PanoError {
    /// An input violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    /// Refinement produced a NaN or infinite energy. Carries the trace
    /// recorded up to the failure.
    #[error("non-finite energy at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        trace: Box<crate::refine::RefineTrace>,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl PanoError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        PanoError::Domain(msg.into())
    }

    pub(crate) fn mismatch(expected: impl ToString, actual: impl ToString) -> Self {
        PanoError::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
