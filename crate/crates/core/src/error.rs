//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures surfaced by the public API. Numerical failures are never
/// swallowed; callers always get either a value or one of these.
#[derive(Debug, Error)]
pub enum EfcError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge ({context}): estimated error {error:e} above tolerance {tolerance:e}")]
    QuadratureFailure {
        context: String,
        error: f64,
        tolerance: f64,
    },

    #[error("splitting-measure tail does not converge: {0}")]
    TailNotConvergent(String),

    #[error("no rigorous tail bound available: {0}")]
    TailBoundUnavailable(String),

    #[error("grid point n = {n} exceeds the supported maximum {max}")]
    GridTooLarge { n: u64, max: u64 },

    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),

    #[error("no proposal envelope for this measure: {0}")]
    EnvelopeUnavailable(String),

    #[error("zero total jump rate at n = {n}")]
    ZeroRate { n: u64 },

    #[error("configuration error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl EfcError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        EfcError::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        EfcError::InvalidArgument(msg.into())
    }
}

impl From<serde_json::Error> for EfcError {
    fn from(e: serde_json::Error) -> Self {
        EfcError::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, EfcError>;
