//! Library side of the `rttp` binary, kept separate so tests can drive
//! commands without spawning a process.

pub mod commands;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Failure while running a command; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub(crate) fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}
