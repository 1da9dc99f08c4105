//! Shared benchmark fixtures.

use scrip_core::chain::WealthState;
use scrip_core::entropy::{min_relent_distribution, nearest_realizable_counts};
use scrip_core::model::{build_game_spec, GameSpec, Money, RawAgentType, ThresholdVector};

/// Reference single-type economy with `n` agents and thresholds of 5.
pub fn reference(n: u64) -> (GameSpec, ThresholdVector) {
    let spec = scrip_core::experiment::reference_spec(n).expect("valid reference spec");
    (spec, scrip_core::experiment::reference_thresholds())
}

/// Three types with distinct rates, `10 n` agents.
pub fn three_types(n: u64) -> (GameSpec, ThresholdVector) {
    let types = vec![
        RawAgentType { alpha: 0.1, beta: 1.0, gamma: 1.0, delta: 0.99, rho: 1.0, chi: 1.0 },
        RawAgentType { alpha: 0.2, beta: 0.5, gamma: 1.5, delta: 0.98, rho: 2.0, chi: 1.5 },
        RawAgentType { alpha: 0.05, beta: 0.8, gamma: 0.7, delta: 0.995, rho: 0.5, chi: 0.5 },
    ];
    let spec = build_game_spec(types, vec![0.5, 0.3, 0.2], 10, Money::integer(2).unwrap(), n)
        .expect("valid three-type spec")
        .spec;
    (spec, ThresholdVector::new(vec![6, 4, 8]))
}

/// Small economy for exact stationary computations.
pub fn tiny(agents: u64, k: u64, money: u64) -> (GameSpec, ThresholdVector) {
    let raw = RawAgentType { alpha: 0.1, beta: 0.8, gamma: 1.0, delta: 0.9, rho: 1.0, chi: 1.0 };
    let spec = build_game_spec(vec![raw], vec![1.0], agents, Money::new(money, agents).unwrap(), 1)
        .expect("valid tiny spec")
        .spec;
    (spec, ThresholdVector::new(vec![k]))
}

/// State as close to `d*` as the population allows.
pub fn near_steady_state(spec: &GameSpec, k: &ThresholdVector) -> WealthState {
    let target = min_relent_distribution(spec, k).expect("d* exists");
    let counts = nearest_realizable_counts(&target, spec).expect("realizable counts");
    WealthState::from_counts(spec, &counts).expect("valid state")
}
