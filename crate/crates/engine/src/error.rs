use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("{op}: shape mismatch, expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("{op}: {extent} extent {size} (+ padding) is smaller than kernel {kernel}")]
    ExtentTooSmall {
        op: &'static str,
        extent: &'static str,
        size: usize,
        kernel: usize,
    },

    #[error("{op}: {extent} extent {size} is not divisible by pool factor {factor}")]
    NotDivisible {
        op: &'static str,
        extent: &'static str,
        size: usize,
        factor: usize,
    },

    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),

    #[error("{context}: non-finite value at element {index}")]
    NonFinite { context: String, index: usize },

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("{layer}: backward called without a recorded training forward pass")]
    BackwardBeforeForward { layer: String },

    #[error("{0}: empty batch")]
    EmptyBatch(&'static str),

    #[error("tensor data length {len} does not match shape {shape}")]
    DataLength { shape: Shape, len: usize },

    #[error("optimizer state does not match parameters: {0}")]
    OptimizerState(String),
}

impl EngineError {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        EngineError::ShapeMismatch {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
