//! Crate-wide error type and exit-code classification.

use thiserror::Error;

/// Top-level error for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or incompatible inputs (bad scenario spec,
    /// mismatched shapes between files, out-of-range flags).
    #[error("validation: {0}")]
    Validation(String),

    /// Numeric failure: NaN loss, eigensolver non-convergence, matrices
    /// outside an algorithm's domain.
    #[error("numeric: {0}")]
    Numeric(String),

    /// File-format failure: wrong magic, truncated payload, unsupported
    /// version.
    #[error("format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Process exit code used by the CLI: 2 validation, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 2,
            Error::Numeric(_) => 3,
            Error::Format(_) | Error::Io(_) | Error::Json(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
