use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Malformed `.dt` stream or inconsistent dump set.
    #[error("format error: {0}")]
    Format(String),

    /// Shape or argument contract violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Caller asked for something the operation does not define (empty corpus, bad config).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
