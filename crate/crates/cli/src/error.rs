use thiserror::Error;

use ringtrain_core::engine::EngineError;
use ringtrain_core::transport::CommError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("communication failure: {0}")]
    Comm(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Comm(_) => 3,
            CliError::Assertion(_) => 4,
            CliError::Failed(_) => 1,
        }
    }

    pub fn io(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Failed(format!("{context}: {e}"))
    }
}

impl From<CommError> for CliError {
    fn from(e: CommError) -> Self {
        CliError::Comm(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(msg) => CliError::Usage(msg),
            e if e.is_comm() => CliError::Comm(e.to_string()),
            e => CliError::Failed(e.to_string()),
        }
    }
}
