//! CLI errors carry their process exit code: 2 for configuration and
//! infeasibility problems, 3 for runtime failures.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn config(err: impl std::fmt::Display) -> Self {
        CliError::Config(err.to_string())
    }

    pub fn runtime(err: impl std::fmt::Display) -> Self {
        CliError::Runtime(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
