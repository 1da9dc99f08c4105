use thiserror::Error;

/// Errors produced by the scrip economy library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScripError {
    #[error("invalid game spec: {0}")]
    InvalidSpec(String),

    #[error("agent type {type_index}: {field} = {value} violates {bound}")]
    AgentTypeBound {
        type_index: usize,
        field: &'static str,
        value: f64,
        bound: &'static str,
    },

    #[error("type {type_index}: f_t * h = {value} is not an integer")]
    NonIntegralTypeCount { type_index: usize, value: f64 },

    #[error("m * h = {num} * {h} / {den} is not an integer")]
    NonIntegralMoney { num: u64, den: u64, h: u64 },

    #[error("fractions sum to {0}, expected 1")]
    FractionsNotNormalized(f64),

    #[error("threshold vector has {got} entries, spec has {expected} types")]
    ThresholdLength { expected: usize, got: usize },

    #[error("money supply at or above capacity: m = {money} >= sum f_t k_t = {capacity}")]
    CapacityExceeded { money: f64, capacity: f64 },

    #[error("no volunteers: every threshold is zero")]
    NoVolunteers,

    #[error("invalid choice probabilities: p_u = {p_u}, p_d = {p_d}")]
    InvalidProbabilities { p_u: f64, p_d: f64 },

    #[error("distributions are over different index sets")]
    IndexMismatch,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("state space has more than {cap} states")]
    StateSpaceTooLarge { cap: usize },

    #[error("exact chain needs at least 3 agents, got {0}")]
    TooFewAgents(u64),

    #[error("chain is reducible: {reachable} of {states} states reachable")]
    ReducibleChain { reachable: usize, states: usize },

    #[error("chain is periodic with period {0}")]
    PeriodicChain(u64),

    #[error("numerical assertion failed: {0}")]
    NumericalAssertion(String),
}

impl ScripError {
    /// True when the error comes from rejecting user-supplied configuration
    /// rather than from a failed numerical check.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ScripError::InvalidSpec(_)
                | ScripError::AgentTypeBound { .. }
                | ScripError::NonIntegralTypeCount { .. }
                | ScripError::NonIntegralMoney { .. }
                | ScripError::FractionsNotNormalized(_)
                | ScripError::ThresholdLength { .. }
                | ScripError::CapacityExceeded { .. }
                | ScripError::NoVolunteers
                | ScripError::InvalidProbabilities { .. }
                | ScripError::IndexMismatch
                | ScripError::StateSpaceTooLarge { .. }
                | ScripError::TooFewAgents(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, ScripError>;
