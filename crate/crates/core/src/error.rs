use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the measure, transport, prior and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid dimensions must be positive, got {rows}x{cols}")]
    EmptyGrid { rows: usize, cols: usize },

    #[error("expected {expected} values for the grid, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("every pixel is zero; cannot normalize to a probability measure")]
    AllZeroInput,

    #[error("negative or non-finite pixel value {value} at index {index}")]
    NegativeInput { index: usize, value: f64 },

    #[error("mass vector is not a probability measure: {0}")]
    NotAMeasure(String),

    #[error("pixel index {index} out of range for a grid of {len} pixels")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),

    #[error("measures live on different grids: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),

    #[error("exact solver is limited to {limit} pixels, got {n}")]
    InstanceTooLarge { n: usize, limit: usize },

    #[error("dual potentials did not converge")]
    NotConverged,

    #[error("barycenter needs at least one input measure")]
    EmptyInputs,

    #[error("invalid barycenter weights: {0}")]
    InvalidWeights(String),

    #[error("step size must be positive, got {0}")]
    StepNotPositive(f64),

    #[error("invalid proximal penalty: {0}")]
    InvalidPenalty(f64),

    #[error("sparsity {k} out of range (1..={max})")]
    SparsityOutOfRange { k: usize, max: usize },

    #[error("invalid dictionary: {0}")]
    InvalidDictionary(String),

    #[error("dictionary learning needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("inconsistent ADMM state: {0}")]
    InconsistentState(String),

    #[error("external projector unavailable: {0}")]
    ProcessUnavailable(String),

    #[error("external projector protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("external projector timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("bad IDX magic number {0:#010x}")]
    BadMagic(u32),

    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
