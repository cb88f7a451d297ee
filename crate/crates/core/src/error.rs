use std::io;

use thiserror::Error;

/// Errors produced by the SPS library.
#[derive(Debug, Error)]
pub enum SpsError {
    /// Inconsistent or invalid configuration (orders, lengths, `m`/`q`, grid sizes).
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the domain of a numerical routine.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix that should be positive semidefinite has a significantly negative eigenvalue.
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e}, max eigenvalue {max_eig:e})")]
    NotPsd { min_eig: f64, max_eig: f64 },

    /// A quantity is undefined because a matrix is rank deficient.
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SpsError> = std::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> SpsError {
    SpsError::Config(msg.into())
}
