//! The round-based scrip economy as a Markov chain: fast simulation for large
//! populations and exact stationary laws for small ones.

mod exact;
mod sim;
mod state;

pub use exact::{
    chain_period, closed_form_stationary, dense_stationary, detailed_balance_residual,
    enumerate_states, gauss_seidel_stationary,
    exact_stationary, solve_stationary, transition_matrix, winner_probabilities, ExactStationary,
    TransitionMatrix, DEFAULT_STATE_CAP, STATIONARY_AGREEMENT,
};
pub use sim::{simulate, step, RoundOutcome, SimulationOptions, SimulationSummary, Simulator, TraceRow};
pub use state::{empirical_distribution, initial_state, EmpiricalDistribution, WealthState};
