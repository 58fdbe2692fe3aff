use thiserror::Error;

/// Errors raised by model construction, analysis and filtering.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{name}` must be finite and strictly positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("invalid OCV polynomial: {0}")]
    InvalidPolynomial(String),

    #[error("unknown model variant `{0}` (expected original, voltage-bias, current-bias or dual-bias)")]
    UnknownVariant(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model structure not supported by the Lie-derivative recursion: {0}")]
    UnsupportedStructure(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("empty evaluation window")]
    EmptyWindow,

    #[error("csv error: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
