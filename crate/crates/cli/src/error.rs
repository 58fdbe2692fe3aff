use thiserror::Error;

/// Failures mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// An expectation passed on the command line did not hold.
    #[error("{0}")]
    Expectation(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Expectation(_) => 2,
            CliError::Usage(_) => 64,
            CliError::Config(_) => 65,
            CliError::MissingInput(_) => 66,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<bmsobs_core::Error> for CliError {
    fn from(e: bmsobs_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
