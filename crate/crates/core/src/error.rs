use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A measure, coupling or point failed one of its invariants.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    /// A recovery precondition (generic position of the sites) does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("unrecoverable frequencies {0:?}: cost coefficient vanishes")]
    UnrecoverableFrequency(Vec<i64>),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
