use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum FarvaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("undeclared category `{value}` for symptom `{symptom}`")]
    UnknownCategory { symptom: String, value: String },

    #[error("incompatible value `{value}` for symptom `{symptom}`: {reason}")]
    IncompatibleValue {
        symptom: String,
        value: String,
        reason: String,
    },

    #[error("sweep failed at iteration {iteration}: {source}")]
    Sweep {
        iteration: usize,
        #[source]
        source: Box<FarvaError>,
    },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FarvaError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(FarvaError::InvalidArgument(msg.into()))
}
