use thiserror::Error;

/// Errors raised by the model, kernel, solver, policy and oracle layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("uniform draw {0} is outside [0, 1)")]
    DrawOutOfRange(f64),

    #[error("negative error magnitude {0} passed to the folded kernel")]
    NegativeFoldedState(f64),

    #[error("infeasible parameters: 2*sigma2*beta_t >= 1 at stage {stage} (beta = {beta})")]
    Infeasible { stage: usize, beta: f64 },

    #[error("log value overflowed at iterate {stage}")]
    Overflow { stage: usize },

    #[error("policy is not of threshold type at stage {stage}, channel {channel}, node {node}")]
    NonThresholdPolicy {
        stage: usize,
        channel: u8,
        node: usize,
    },

    #[error("enumeration needs {required} policy evaluations, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("horizon {horizon} exceeds the exact-evaluation limit {limit}")]
    HorizonTooLarge { horizon: usize, limit: usize },

    #[error("table shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
