use std::io;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty constraint set")]
    EmptyConstraints,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("step size {gamma} outside [0, {gamma_max}]")]
    StepOutOfRange { gamma: f64, gamma_max: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("generator: {0}")]
    Generator(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
