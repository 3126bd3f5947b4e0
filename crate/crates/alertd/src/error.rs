use thiserror::Error;

#[derive(Debug, Error)]
pub enum AlertError {
    #[error("malformed message: {0}")]
    Malformed(String),

    #[error("unknown encounter `{0}`")]
    UnknownEncounter(String),

    #[error("{kind} value {value} is outside plausible bounds")]
    Implausible { kind: String, value: f64 },

    #[error(transparent)]
    Engine(#[from] ews_core::Error),
}

pub type AlertResult<T> = Result<T, AlertError>;
