use thiserror::Error;

pub type Result<T> = std::result::Result<T, PivqError>;

#[derive(Debug, Error)]
pub enum PivqError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("codebook must contain at least one entry")]
    EmptyCodebook,

    #[error("cost matrix has {rows} rows but {cols} columns; need rows >= cols")]
    TooFewRows { rows: usize, cols: usize },

    #[error("codebook has {k} entries but {l} embeddings need distinct codes")]
    CodebookTooSmall { k: usize, l: usize },

    #[error("code {code} out of range for codebook of size {k}")]
    CodeOutOfRange { code: usize, k: usize },

    #[error("duplicate code {0} in code set")]
    DuplicateCode(usize),

    #[error("code sets differ in size ({a} vs {b})")]
    SizeMismatch { a: usize, b: usize },

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PivqError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PivqError::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        PivqError::Parse(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(PivqError::DimensionMismatch { expected, actual });
    }
    Ok(())
}
