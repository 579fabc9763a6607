use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoraxError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("empty selection: {0}")]
    EmptySelection(String),
    #[error("empty mask: {0}")]
    EmptyMask(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("invalid error specification: {0}")]
    Specification(String),
    #[error("{abnormality} is already reported")]
    NoOpViolation { abnormality: String },
    #[error("validation failed at `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("image: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CoraxError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        CoraxError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = CoraxError> = std::result::Result<T, E>;
