//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("feature file format error: {0}")]
    Format(String),

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("kernel matrix is not symmetric (max |L - L^T| = {0:.3e})")]
    AsymmetricKernel(f64),

    #[error("kernel matrix is not positive semi-definite (eigenvalue {eigenvalue:.3e} below clamp threshold {threshold:.3e})")]
    NotPsd { eigenvalue: f64, threshold: f64 },

    #[error("matrix is singular or not positive definite")]
    SingularMatrix,

    #[error("conditioning set has probability zero under this kernel")]
    ImpossibleCondition,

    #[error("requested size {k} exceeds kernel rank {rank}")]
    InfeasibleSize { k: usize, rank: usize },

    #[error("ground set of size {n} exceeds the enumeration guard ({max})")]
    SizeGuard { n: usize, max: usize },

    #[error("inhibitive attention collapsed to zero mass")]
    DegenerateAttention,

    #[error("all remaining items have zero predicted mass")]
    DegenerateDistribution,

    #[error("model/input incompatibility: {0}")]
    IncompatibleInput(String),

    #[error("checkpoint version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint shape inconsistency: {0}")]
    CheckpointShape(String),

    #[error("unreadable checkpoint: {0}")]
    CheckpointParse(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite activation while processing batch record {batch_index}")]
    TrainingDivergence { batch_index: usize },

    #[error("ridge system is singular; increase the ridge parameter")]
    SingularRidge,

    #[error("unknown method name: {0}")]
    UnknownMethod(String),

    #[error("method {0} does not support a nonempty conditioning set")]
    UnsupportedConditioning(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
