use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad arguments, shapes or preconditions.
    #[error("usage error: {0}")]
    Usage(String),
    /// A size cap or combinatorial guard was hit.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    /// Non-finite values or failed convergence.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Malformed checkpoint, architecture or data file.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
