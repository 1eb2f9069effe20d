use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported operation: {0}")]
    UnsupportedOperation(String),

    #[error("enumeration over {edges} edges exceeds the cap of {cap}")]
    ResourceLimit { edges: usize, cap: usize },

    #[error("degenerate conditioning: {0}")]
    DegenerateConditioning(String),

    #[error("configuration does not belong to this lattice (expected {expected} edges, got {got})")]
    LatticeMismatch { expected: usize, got: usize },

    #[error("malformed snapshot: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
