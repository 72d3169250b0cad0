//! Library side of the experiment runner; the binary is a thin clap shell
//! over [`runner`].

pub mod config;
pub mod output;
pub mod runner;

use thiserror::Error;

/// Runner errors, split so the binary can map them to exit codes:
/// configuration problems exit 2, the assumption gate exits 3, everything
/// else exits 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model assumptions fail (use --force to run anyway): {0}")]
    Gate(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Gate(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}
