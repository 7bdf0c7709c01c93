use thiserror::Error;

/// Errors produced by the calibration toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),

    #[error("no overlapping timestamps between sensor and reference series")]
    EmptyOverlap,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset too small: {0}")]
    TooSmall(String),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("matrix factorization failed: {0}")]
    Factorization(&'static str),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("no grid cell produced a finite cross-validation score")]
    AllCellsFailed,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
