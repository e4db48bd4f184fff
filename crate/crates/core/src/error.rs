use thiserror::Error;

use crate::model::SampleId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("bordered system is singular (border quadratic form {value:.3e})")]
    SingularBorder { value: f64 },

    #[error("Schur block of the grown matrix is singular")]
    SingularSchurBlock,

    #[error("corner block of the removed indices is singular")]
    SingularCornerBlock,

    #[error("index {index} out of range for order {order}")]
    IndexOutOfRange { index: usize, order: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("classification targets must be -1 or +1, got {0}")]
    InvalidLabel(f64),

    #[error("training data contains a single class")]
    SingleClassInput,

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("solver did not converge after {iterations} iterations (worst KKT gap {worst_gap:.3e})")]
    NoConvergence { iterations: usize, worst_gap: f64 },

    #[error("ridge parameter must be positive for multiplier prediction, got {0}")]
    NonpositiveRho(f64),

    #[error("unknown sample id {0}")]
    UnknownId(SampleId),

    #[error("sample id {0} already present")]
    DuplicateId(SampleId),

    #[error("no unbounded support vectors")]
    EmptyS,

    #[error("inconsistent state at index {index}: {detail}")]
    InconsistentState { index: usize, detail: String },

    #[error("KKT repair did not settle after {passes} passes (worst violation {worst:.3e})")]
    RepairDivergence { passes: usize, worst: f64 },

    #[error("path following stalled after {events} events at eta {eta:.6}")]
    StalledPath { events: usize, eta: f64 },

    #[error("inconsistent path event: {0}")]
    InconsistentEvent(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("label domain error at line {line}: {message}")]
    LabelDomain { line: usize, message: String },

    #[error("column {0} is constant and cannot be standardized")]
    ConstantColumn(usize),

    #[error("invalid split plan: {0}")]
    InvalidPlan(String),

    #[error("incremental pool exhausted: round {round} needs {needed}, {available} left")]
    PoolExhausted {
        round: usize,
        needed: usize,
        available: usize,
    },

    #[error("cannot remove {requested} samples from a model of {available}")]
    ScheduleInfeasible { requested: usize, available: usize },

    #[error("model file version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u64 },

    #[error("corrupt model file: {0}")]
    CorruptFile(String),

    #[error("empty dataset: {0}")]
    EmptyData(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
