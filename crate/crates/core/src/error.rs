use thiserror::Error;

/// Errors surfaced by model construction, planning, and fitting.
///
/// Infeasible and unbounded linear programs are not errors; they are ordinary
/// outcomes reported through [`crate::lp::LpOutcome`] and
/// [`crate::planner::PlanOutcome`].
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("singular linear system (pivot {pivot:.3e} at column {column})")]
    SingularSystem { pivot: f64, column: usize },

    #[error("not enough data: have {have} samples, need at least {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("internal numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
