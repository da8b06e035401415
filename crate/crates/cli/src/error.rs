use thiserror::Error;

use squeezeclock_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Rejected configuration; exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Numerical or runtime failure; exit code 1.
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter(_)
            | CoreError::KappaOutOfRange { .. }
            | CoreError::UnknownStrategy { .. }
            | CoreError::FastModeUnsupported(_) => CliError::Config(e.to_string()),
            CoreError::OutOfBounds { .. }
            | CoreError::InsufficientData(_)
            | CoreError::Optimization(_) => CliError::Runtime(e.to_string()),
        }
    }
}
