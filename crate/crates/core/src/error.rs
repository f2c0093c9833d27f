use thiserror::Error;

/// Errors produced by the sorting-network engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("bitonic networks require a power-of-two lane count, got {0}")]
    NotPowerOfTwo(usize),

    #[error("lane {lane} out of range for {n} lanes")]
    LaneOutOfRange { lane: usize, n: usize },

    #[error("lane {lane} appears more than once in layer {layer}")]
    DuplicateLane { lane: usize, layer: usize },

    #[error("comparator in layer {layer} uses lane {lane} for both min and max")]
    DegenerateComparator { lane: usize, layer: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid rank permutation: {0}")]
    InvalidPermutation(String),

    #[error("exhaustive check is limited to n <= {max}, got {n}")]
    ExhaustiveBound { n: usize, max: usize },

    #[error("input gap {gap} is below the required minimum {required}")]
    GapTooSmall { gap: f64, required: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
