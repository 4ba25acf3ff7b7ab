use alloc::string::String;
use alloc::vec::Vec;

/// Errors surfaced by the numeric layers of the toolkit.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss ({loss}) at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, loss: f64 },
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("requested {requested} examples but only {available} qualify")]
    InsufficientExamples { requested: usize, available: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("mismatched lengths: {0}")]
    LengthMismatch(String),
}

pub type Result<T> = core::result::Result<T, Error>;
