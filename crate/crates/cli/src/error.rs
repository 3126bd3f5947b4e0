use thiserror::Error;

/// Front-end errors, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<ews_core::Error> for CliError {
    fn from(e: ews_core::Error) -> Self {
        match e {
            ews_core::Error::Config(msg) => CliError::Config(msg),
            // Every JSON document the CLI reads is user input.
            ews_core::Error::Json(_) => CliError::Data(e.to_string()),
            e if e.is_data_error() => CliError::Data(e.to_string()),
            e => CliError::Internal(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
