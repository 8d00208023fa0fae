use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty region")]
    EmptyRegion,

    /// A parameter lies outside the range in which the underlying estimate
    /// is stated. Distinct from `InvalidParameter` so drivers can report it
    /// with its own exit code.
    #[error("precondition refused: {0}")]
    Refused(String),

    #[error("eigendecomposition failed (residual {residual:.3e})")]
    Eigen { residual: f64 },

    #[error("singular linear system")]
    Singular,

    #[error("cache key mismatch: expected {expected}, found {found}")]
    CacheKey { expected: String, found: String },

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
