use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("geometry mismatch: expected {expected} values, found {found}")]
    GeometryMismatch { expected: usize, found: usize },

    #[error("invalid site index {index} (geometry has {count} sites)")]
    InvalidSite { index: usize, count: usize },

    #[error("input sequence is empty")]
    EmptyInput,

    #[error("malformed tuple #{index}: {reason}")]
    MalformedTuple { index: usize, reason: String },

    #[error("no baseline entry for sequence length {0}")]
    MissingBaseline(usize),

    #[error("diagonalization failed: {0}")]
    Diagonalization(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("bond dimension {needed} exceeds hard cap {cap} at tolerance {tol:e}")]
    BondCapExceeded { needed: usize, cap: usize, tol: f64 },

    #[error("parameter {name} = {value} outside its allowed range {range}")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("sample set too small: need at least {needed}, got {got}")]
    EmptySampleSet { needed: usize, got: usize },

    #[error("not enough points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("grid is not uniformly spaced")]
    NonUniformGrid,

    #[error("collapse window contains only {0} points (need at least 5)")]
    DegenerateWindow(usize),

    #[error("input must be strictly positive, got {0}")]
    NonPositiveInput(f64),

    #[error("sample budget cap {cap} exceeded")]
    BudgetExceeded { cap: usize },

    #[error("probability evaluation failed at step {step}: {reason}")]
    ChainHalted { step: usize, reason: String },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("{0}")]
    Invalid(String),
}
