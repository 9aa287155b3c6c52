use thiserror::Error;

#[derive(Debug, Error)]
pub enum FdmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid file: {0}")]
    Format(String),
    #[error("trajectory too short: {0}")]
    InsufficientLength(String),
    #[error("records out of order: {0}")]
    Unordered(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("backward called before forward")]
    NoForwardCache,
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
}

pub type Result<T> = std::result::Result<T, FdmError>;
