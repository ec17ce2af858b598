//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("integration diverged: state became non-finite")]
    IntegrationDiverged,

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("demonstration failed from {x0:?}: {reason}")]
    DemonstrationFailed { x0: Vec<f64>, reason: String },

    #[error("Riccati step singular: condition number of (R + B'SB) exceeds 1e12")]
    RiccatiSingular,

    #[error("time {t} outside tracking horizon [0, {max}]")]
    TimeOutOfRange { t: f64, max: f64 },

    #[error("linearization at the origin is not stabilizable")]
    NotStabilizable,

    #[error("LP solver failure: {0}")]
    LpSolverFailure(String),

    #[error("demonstration database is empty")]
    EmptyDatabase,

    #[error("candidate is not compatible with the stored demonstrations")]
    NotCompatible,

    #[error("checkpoint does not match the current configuration: {0}")]
    ConfigMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
