//! Error type for the IO/CLI layer, with the process exit-code policy.

use ldp_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad inputs: malformed files, invalid configs, contract violations.
    #[error("{0}")]
    Validation(String),
    /// Parse failures with a location.
    #[error("parse error at byte {offset} in {path}: {message}")]
    Parse {
        path: String,
        offset: u64,
        message: String,
    },
    /// Failures while running: IO, training divergence, infeasible budgets.
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Validation(m) | CoreError::Shape(m) => CliError::Validation(m),
            CoreError::NonFinite(m) | CoreError::Contract(m) | CoreError::Training(m) => {
                CliError::Runtime(m)
            }
        }
    }
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError::Validation(message.into())
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError::Runtime(message.into())
    }

    /// 2 for bad inputs, 3 for runtime failures (0 is success).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Parse { .. } => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }
}
