//! Library side of the `sps` command-line tool: configuration, command
//! execution and artifact writing.

pub mod config;
pub mod run;

pub use config::{preset, Command, Overrides, Preset, RunConfig};
pub use run::{execute, Artifacts};

use sps_core::SpsError;

/// Failures mapped to process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Degenerate(String),
}

impl CliError {
    /// 2 configuration, 3 I/O, 4 numerical degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }
}

impl From<SpsError> for CliError {
    fn from(e: SpsError) -> Self {
        match e {
            SpsError::Config(_) | SpsError::Domain(_) => CliError::Config(e.to_string()),
            SpsError::NotPsd { .. } | SpsError::Degenerate(_) => CliError::Degenerate(e.to_string()),
            SpsError::Io(_) | SpsError::Csv(_) | SpsError::Json(_) => CliError::Io(e.to_string()),
        }
    }
}
