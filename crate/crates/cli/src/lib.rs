//! Library side of the batch front end: configuration, the subcommand
//! implementations, and the self-check battery.

pub mod checks;
pub mod config;
pub mod plot;
pub mod run;

use thiserror::Error;

/// CLI failure classes, mapped onto exit codes 1/2/3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] aduq::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }
}
