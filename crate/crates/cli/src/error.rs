use std::fmt;

/// Command failure, split by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or arguments, detected before any side effect. Exit code 1.
    #[error("invalid configuration: {0}")]
    Validation(String),
    /// Failure while running a valid command. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn validation(e: impl fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
