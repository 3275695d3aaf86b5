use thiserror::Error;

use crate::nets::TwoLayerNet;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value produced by `{op}`")]
    NonFiniteValue { op: &'static str },

    #[error("internal graph error: {0}")]
    InternalGraph(String),

    #[error("expected {expected} inputs, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cannot sample from an empty measure (zero Barron norm)")]
    EmptyMeasure,

    #[error("H1 error {error:.6e} exceeds bound {bound:.6e} after {attempts} attempts")]
    BoundUnmet {
        best: Box<TwoLayerNet>,
        error: f64,
        bound: f64,
        attempts: usize,
    },

    #[error("tensor-product rule unsupported for dimension {0} (max 3)")]
    UnsupportedDimension(usize),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("index {index} out of range for batch of {len}")]
    Index { index: usize, len: usize },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("primal-dual oracle stopped with duality gap {gap:.3e} after {iterations} iterations")]
    Oracle { gap: f64, iterations: usize },

    #[error("power-law fit: {0}")]
    Fit(String),

    #[error("IDX format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
