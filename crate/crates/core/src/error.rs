use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} = {value} is outside the supported range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical failure at step {step} (z = {z}): {detail}")]
    NumericalFailure { step: usize, z: f64, detail: String },

    #[error("no bracket: {0}")]
    NoBracket(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{dropped} of {total} realizations produced non-finite values")]
    TooManyDrops { dropped: usize, total: usize },

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
