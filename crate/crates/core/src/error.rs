use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid scenario: `{field}`: {message}")]
    InvalidScenario { field: String, message: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("exact solver refused: {nodes} nodes exceeds the limit of {limit}")]
    TooLarge { nodes: usize, limit: usize },

    #[error("training halted at episode {episode}: {reason}")]
    TrainingHalted { episode: usize, reason: String },

    #[error("scenario generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn scenario(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidScenario { field: field.into(), message: message.into() }
    }
}
