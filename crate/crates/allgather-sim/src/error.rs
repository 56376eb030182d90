//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an argument contract (rank out of range, malformed
    /// buffer, self-message, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The topology does not satisfy the preconditions of the requested
    /// algorithm or model.
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    /// A step posted a send or receive with no matching counterpart.
    #[error("deadlock at step {step}: {detail}")]
    Deadlock { step: usize, detail: String },

    /// A matched transfer carried the wrong payload (size mismatch, missing
    /// block, conflicting duplicate).
    #[error("protocol error at step {step}: {detail}")]
    Protocol { step: usize, detail: String },

    /// A cost-parameter file could not be parsed.
    #[error("parameter file: {0}")]
    Params(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
