use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SieveError {
    #[error("numerical failure in {context}: error estimate {estimate:e}")]
    Numerical { context: String, estimate: f64 },

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration budget exceeded: {count} patterns against a budget of {budget}")]
    BudgetExceeded { count: u128, budget: u128 },

    #[error("truncation residual {residual:e} above tolerance {tolerance:e}")]
    Truncation { residual: f64, tolerance: f64 },

    #[error("rejection budget of {attempts} attempts exhausted (forward part {forward})")]
    RejectionBudget { attempts: u64, forward: f64 },

    #[error("coincident renewal and Poisson points at {0}")]
    CoincidentPoints(f64),

    #[error("incomplete scan: stop rule not triggered within {gaps} gaps")]
    IncompleteScan { gaps: usize },

    #[error("statistics: {0}")]
    Stats(String),
}

pub type Result<T> = std::result::Result<T, SieveError>;
