use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: expected n = {expected}, got n = {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("zero pivot in tridiagonal elimination at row {0}")]
    ZeroPivot(usize),

    #[error("divergence at step {step} (t = {time}): {what}")]
    Divergence { step: u64, time: f64, what: String },

    #[error("too few usable points for a rate fit: {0} (need at least 3)")]
    TooFewPoints(usize),

    #[error("{failed} of {total} seeds failed, above the 20% abort threshold")]
    TooManyFailures { failed: usize, total: usize },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed trajectory file: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub(crate) fn param(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
