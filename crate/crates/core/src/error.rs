use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or value broke a documented precondition.
    #[error("invalid input: {0}")]
    Validation(String),

    /// A log line or datagram could not be decoded.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("encoded package is {size} bytes, limit is {limit}")]
    DatagramTooLarge { size: usize, limit: usize },

    /// A table file was corrupt or did not match the expected grid.
    #[error("table load failed: {0}")]
    TableFormat(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for failures that come from the outside world (files, sockets)
    /// rather than from bad input values.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
