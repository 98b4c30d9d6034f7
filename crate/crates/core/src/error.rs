use thiserror::Error;

/// Errors raised by model construction, analytics and planning.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid range: {0}")]
    Range(String),

    #[error("kernel row (state {state}, action {action}) is not a probability distribution: {detail}")]
    NotStochastic {
        state: usize,
        action: usize,
        detail: String,
    },

    #[error("reward {value} at (state {state}, action {action}) is outside [0, 1]")]
    RewardRange { state: usize, action: usize, value: f64 },

    #[error(
        "exhaustive enumeration needs {required:.3e} policy pairs per window but the budget is {budget}; \
         use sampled mode instead"
    )]
    Budget { required: f64, budget: u64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
