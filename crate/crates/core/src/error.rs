use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum FlacError {
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {context} at index {index}")]
    NumericalFault { context: String, index: usize },

    #[error("replay buffer holds {size} items, {requested} requested")]
    NotReady { size: usize, requested: usize },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FlacError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        FlacError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn fault(context: impl Into<String>, index: usize) -> Self {
        FlacError::NumericalFault {
            context: context.into(),
            index,
        }
    }
}

pub type Result<T> = std::result::Result<T, FlacError>;
