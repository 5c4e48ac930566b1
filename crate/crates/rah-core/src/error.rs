//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RahError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("malformed backend response: {0}")]
    MalformedResponse(String),

    #[error("transport error{}: {msg}", if *.retryable { " (retryable)" } else { "" })]
    Transport { msg: String, retryable: bool },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: String, expected: String },

    #[error("training diverged at epoch {epoch}: {msg}")]
    Divergence { epoch: usize, msg: String },

    #[error("run error: {0}")]
    Run(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RahError>;
