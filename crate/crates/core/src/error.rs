use thiserror::Error;

/// Errors raised by game evaluation, oracles and algorithms.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: wrong dimensions, out-of-range parameters, bad profiles.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// The requested evaluation is not available for this game
    /// (e.g. exact expectations beyond the enumeration guard).
    #[error("unsupported operation: {0}")]
    Capability(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
