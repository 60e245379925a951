use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (dimensions, index ranges, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// A computation produced or received a non-finite or otherwise unusable value.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A configuration file could not be parsed.
    #[error("usage error: {0}")]
    Usage(String),
    /// A configuration parsed but is semantically invalid.
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn numeric(msg: impl Into<String>) -> Error {
    Error::Numeric(msg.into())
}
