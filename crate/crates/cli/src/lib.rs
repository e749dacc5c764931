//! Command-line front end: configuration loading, the verification suite and
//! the `simulate`, `verify` and `converge` commands.

pub mod commands;
pub mod config;
pub mod output;
pub mod suite;

use thiserror::Error;

/// Failure of a CLI command, mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("solver failure: {0}")]
    Solver(#[from] depi_core::Error),

    #[error("property check failed: {0}")]
    Property(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Property(_) => 3,
        }
    }
}
