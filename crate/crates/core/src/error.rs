use thiserror::Error;

/// Errors raised by the sampling toolkit.
#[derive(Debug, Error)]
pub enum DapsError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("iterate diverged in {stage}: norm {norm:e} exceeds {limit:e} (reduce the step size)")]
    Diverged {
        stage: &'static str,
        norm: f64,
        limit: f64,
    },

    #[error("non-finite state in {stage} at noise level {sigma}")]
    NonFinite { stage: &'static str, sigma: f64 },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DapsError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> DapsError {
    DapsError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(DapsError::DimensionMismatch { expected, got })
    }
}
