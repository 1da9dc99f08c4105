use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::MoneyDistribution;
use crate::error::{Result, ScripError};
use crate::model::{GameSpec, ThresholdVector};

/// Dollar holdings of every agent, indexed in replica layout.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WealthState {
    holdings: Vec<u64>,
}

impl WealthState {
    pub fn new(holdings: Vec<u64>) -> Self {
        WealthState { holdings }
    }

    pub fn holdings(&self) -> &[u64] {
        &self.holdings
    }

    pub fn len(&self) -> usize {
        self.holdings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.holdings.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.holdings.iter().sum()
    }

    pub fn into_holdings(self) -> Vec<u64> {
        self.holdings
    }

    /// Checks agent count and total money against the spec.
    pub fn check(&self, spec: &GameSpec) -> Result<()> {
        if self.holdings.len() as u64 != spec.agents() {
            return Err(ScripError::InvalidSpec(format!(
                "state has {} agents, spec has {}",
                self.holdings.len(),
                spec.agents()
            )));
        }
        if self.total() != spec.total_money() {
            return Err(ScripError::InvalidSpec(format!(
                "state holds {} dollars, spec has {}",
                self.total(),
                spec.total_money()
            )));
        }
        Ok(())
    }

    /// Realizes integer counts `c(t, i)`: within each type, agents in layout
    /// order are given level 0 first, then level 1, and so on.
    pub fn from_counts(spec: &GameSpec, counts: &[Vec<u64>]) -> Result<Self> {
        if counts.len() != spec.num_types() {
            return Err(ScripError::IndexMismatch);
        }
        let mut queues: Vec<_> = counts
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .flat_map(|(i, &c)| std::iter::repeat_n(i as u64, c as usize))
            })
            .collect();
        let mut holdings = Vec::with_capacity(spec.agents() as usize);
        for agent in 0..spec.agents() {
            let t = spec.type_of_agent(agent);
            holdings.push(queues[t].next().ok_or_else(|| {
                ScripError::InvalidSpec(format!("counts for type {t} cover too few agents"))
            })?);
        }
        if queues.iter_mut().any(|q| q.next().is_some()) {
            return Err(ScripError::InvalidSpec("counts cover too many agents".into()));
        }
        let state = WealthState { holdings };
        state.check(spec)?;
        Ok(state)
    }

    /// Extreme start: agents in layout order are filled up to their threshold
    /// until the money runs out, so all but at most one agent hold either
    /// nothing or exactly `k_t`.
    pub fn extreme(spec: &GameSpec, k: &ThresholdVector) -> Result<Self> {
        k.validate(spec)?;
        let mut remaining = spec.total_money();
        let holdings = (0..spec.agents())
            .map(|agent| {
                let give = remaining.min(k.get(spec.type_of_agent(agent)));
                remaining -= give;
                give
            })
            .collect();
        Ok(WealthState { holdings })
    }
}

/// Allocates each of the `m h n` dollars to an agent chosen uniformly at random.
pub fn initial_state<R: Rng + ?Sized>(spec: &GameSpec, rng: &mut R) -> WealthState {
    let agents = spec.agents();
    let mut holdings = vec![0u64; agents as usize];
    for _ in 0..spec.total_money() {
        holdings[rng.random_range(0..agents) as usize] += 1;
    }
    WealthState { holdings }
}

/// Empirical distribution of a state over levels `0..=k_t`, with the fraction
/// of agents above their threshold kept per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub distribution: MoneyDistribution,
    pub excess: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn total_excess(&self) -> f64 {
        self.excess.iter().sum()
    }
}

pub(crate) fn counts_by_level(
    spec: &GameSpec,
    k: &ThresholdVector,
    holdings: &[u64],
) -> (Vec<Vec<u64>>, Vec<u64>) {
    let mut counts: Vec<Vec<u64>> = k.as_slice().iter().map(|&kt| vec![0; kt as usize + 1]).collect();
    let mut excess = vec![0u64; k.len()];
    for (agent, &x) in holdings.iter().enumerate() {
        let t = spec.type_of_agent(agent as u64);
        if x <= k.get(t) {
            counts[t][x as usize] += 1;
        } else {
            excess[t] += 1;
        }
    }
    (counts, excess)
}

/// `d(t, i) = #{agents of type t holding i} / (h n)`.
pub fn empirical_distribution(
    state: &WealthState,
    spec: &GameSpec,
    k: &ThresholdVector,
) -> Result<EmpiricalDistribution> {
    k.check_len(spec)?;
    if state.len() as u64 != spec.agents() {
        return Err(ScripError::IndexMismatch);
    }
    let (counts, excess) = counts_by_level(spec, k, &state.holdings);
    let scale = 1.0 / spec.agents() as f64;
    Ok(EmpiricalDistribution {
        distribution: MoneyDistribution::from_counts(&counts, spec.agents()),
        excess: excess.into_iter().map(|c| c as f64 * scale).collect(),
    })
}
