//! Scrip economy model: agent types, steady-state wealth distributions, the
//! scrip Markov chain, threshold best replies and equilibrium search.

pub mod chain;
pub mod entropy;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod mdp;
pub mod model;

pub use chain::{
    empirical_distribution, exact_stationary, initial_state, simulate, step, ExactStationary,
    RoundOutcome, SimulationOptions, SimulationSummary, Simulator, WealthState,
};
pub use entropy::{
    base_distribution, mean_money, min_relent_distribution, nearest_realizable, potential_v,
    relative_entropy, solve_lambda, LambdaSolution, MoneyDistribution,
};
pub use equilibrium::{
    best_reply_vector, greatest_equilibrium, Classification, EquilibriumResult,
};
pub use error::{Result, ScripError};
pub use experiment::{ExperimentConfig, Mode};
pub use mdp::{
    best_reply_threshold, choice_probabilities, discounted_ruin_factor, value_iteration_policy,
    BestReplyReport, ChoiceProbabilities, PolicyReport,
};
pub use model::{
    build_game_spec, per_round_discount, AgentType, BuiltGameSpec, GameSpec, Money, RawAgentType,
    ThresholdVector,
};
