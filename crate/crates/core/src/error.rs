use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("infeasible action {action} selected at step {step}, state {state}")]
    InfeasibleAction {
        step: usize,
        state: usize,
        action: usize,
    },

    #[error("no feasible action in state {state}")]
    EmptyActionMask { state: usize },

    #[error("a mixture policy needs at least one component")]
    EmptyMixture,

    #[error(
        "policy enumeration needs {count} evaluations, above the limit of {limit}; shrink the instance"
    )]
    EnumerationTooLarge { count: u128, limit: u64 },

    #[error("model would need {entries} transition entries, above the limit of {limit}")]
    ModelTooLarge { entries: usize, limit: usize },

    #[error("power {power} exceeds the available energy {available}")]
    InsufficientEnergy { power: u32, available: u32 },
}
