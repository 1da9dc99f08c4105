use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::state::{counts_by_level, EmpiricalDistribution, WealthState};
use crate::entropy::MoneyDistribution;
use crate::error::{Result, ScripError};
use crate::model::{GameSpec, ThresholdVector};

const NOT_WILLING: u32 = u32::MAX;

/// What happened in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub requester: u64,
    /// Agents other than the requester able to satisfy the request.
    pub capable: u64,
    /// Capable agents that chose to volunteer.
    pub volunteers: u64,
    pub winner: Option<u64>,
    pub paid: bool,
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, p: f64) -> u64 {
    if trials == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        trials
    } else {
        Binomial::new(trials, p).expect("p in (0, 1)").sample(rng)
    }
}

/// Round-by-round simulator for agents playing threshold strategies.
///
/// Each type keeps the set of agents currently below threshold, so a round
/// costs O(types) draws plus O(1) bookkeeping regardless of population size.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: GameSpec,
    k: ThresholdVector,
    holdings: Vec<u64>,
    agent_type: Vec<u32>,
    willing: Vec<Vec<u32>>,
    position: Vec<u32>,
    level_counts: Vec<Vec<u64>>,
    excess: Vec<u64>,
    requester_type: WeightedAliasIndex<f64>,
    type_offset: Vec<u64>,
    round: u64,
}

impl Simulator {
    pub fn new(spec: &GameSpec, k: &ThresholdVector, state: WealthState) -> Result<Self> {
        k.check_len(spec)?;
        state.check(spec)?;
        if spec.agents() >= NOT_WILLING as u64 {
            return Err(ScripError::InvalidSpec("too many agents for the simulator".into()));
        }
        let holdings = state.into_holdings();
        let agent_type: Vec<u32> = (0..spec.agents())
            .map(|a| spec.type_of_agent(a) as u32)
            .collect();
        let mut willing = vec![Vec::new(); spec.num_types()];
        let mut position = vec![NOT_WILLING; holdings.len()];
        for (agent, &x) in holdings.iter().enumerate() {
            let t = agent_type[agent] as usize;
            if x < k.get(t) {
                position[agent] = willing[t].len() as u32;
                willing[t].push(agent as u32);
            }
        }
        let (level_counts, excess) = counts_by_level(spec, k, &holdings);
        let weights: Vec<f64> = spec
            .types()
            .iter()
            .zip(spec.fractions())
            .map(|(ty, f)| ty.rho() * f)
            .collect();
        let requester_type = WeightedAliasIndex::new(weights)
            .map_err(|e| ScripError::InvalidSpec(format!("request weights: {e}")))?;
        let mut type_offset = Vec::with_capacity(spec.num_types());
        let mut acc = 0;
        for t in 0..spec.num_types() {
            type_offset.push(acc);
            acc += spec.base_count(t);
        }
        Ok(Simulator {
            spec: spec.clone(),
            k: k.clone(),
            holdings,
            agent_type,
            willing,
            position,
            level_counts,
            excess,
            requester_type,
            type_offset,
            round: 0,
        })
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn thresholds(&self) -> &ThresholdVector {
        &self.k
    }

    pub fn holdings(&self) -> &[u64] {
        &self.holdings
    }

    pub fn state(&self) -> WealthState {
        WealthState::new(self.holdings.clone())
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// True when no agent is below threshold, so no request can ever be served.
    pub fn frozen(&self) -> bool {
        self.willing.iter().all(Vec::is_empty)
    }

    /// Agent counts per (type, level) for levels `0..=k_t`.
    pub fn level_counts(&self) -> &[Vec<u64>] {
        &self.level_counts
    }

    /// Agents per type holding more than their threshold.
    pub fn excess_counts(&self) -> &[u64] {
        &self.excess
    }

    pub fn empirical(&self) -> EmpiricalDistribution {
        let scale = 1.0 / self.spec.agents() as f64;
        EmpiricalDistribution {
            distribution: MoneyDistribution::from_counts(&self.level_counts, self.spec.agents()),
            excess: self.excess.iter().map(|&c| c as f64 * scale).collect(),
        }
    }

    /// `sum |d - target|^2` over levels `0..=k_t`, without allocating.
    pub fn squared_distance_to(&self, target: &MoneyDistribution) -> f64 {
        let scale = 1.0 / self.spec.agents() as f64;
        self.level_counts
            .iter()
            .zip(target.levels())
            .map(|(row, trow)| {
                row.iter()
                    .zip(trow)
                    .map(|(&c, &d)| {
                        let e = c as f64 * scale - d;
                        e * e
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    fn uniform_agent_of_type<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> u64 {
        let c = self.spec.base_count(t);
        let u = rng.random_range(0..c * self.spec.n());
        (u / c) * self.spec.h() + self.type_offset[t] + u % c
    }

    fn set_holding(&mut self, agent: usize, value: u64) {
        let t = self.agent_type[agent] as usize;
        let kt = self.k.get(t);
        let old = self.holdings[agent];
        if old <= kt {
            self.level_counts[t][old as usize] -= 1;
        } else {
            self.excess[t] -= 1;
        }
        if value <= kt {
            self.level_counts[t][value as usize] += 1;
        } else {
            self.excess[t] += 1;
        }
        self.holdings[agent] = value;

        let was = self.position[agent] != NOT_WILLING;
        let now = value < kt;
        if was && !now {
            let pos = self.position[agent] as usize;
            let last = self.willing[t].pop().expect("agent is in the set");
            if last as usize != agent {
                self.willing[t][pos] = last;
                self.position[last as usize] = pos as u32;
            }
            self.position[agent] = NOT_WILLING;
        } else if !was && now {
            self.position[agent] = self.willing[t].len() as u32;
            self.willing[t].push(agent as u32);
        }
    }

    /// Plays one round: a requester is drawn, capable agents below threshold
    /// volunteer if the requester can pay, and a chi-weighted winner is paid.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> RoundOutcome {
        self.round += 1;
        let rt = self.requester_type.sample(rng);
        let requester = self.uniform_agent_of_type(rt, rng);
        let can_pay = self.holdings[requester as usize] >= 1;
        let requester_willing = self.position[requester as usize] != NOT_WILLING;

        let types = self.spec.num_types();
        let mut volunteers_by_type = [0u64; 8];
        let mut volunteers_vec;
        let volunteers: &mut [u64] = if types <= 8 {
            &mut volunteers_by_type[..types]
        } else {
            volunteers_vec = vec![0u64; types];
            &mut volunteers_vec
        };

        let mut capable = 0;
        let mut total_volunteers = 0;
        let mut weight = 0.0;
        for (t, v) in volunteers.iter_mut().enumerate() {
            let beta = self.spec.agent_type(t).beta();
            let own = u64::from(t == rt);
            let mut willing = self.willing[t].len() as u64;
            if t == rt && requester_willing {
                willing -= 1;
            }
            let unwilling = self.spec.type_agents(t) - own - willing;
            let vt = if can_pay { binomial(rng, willing, beta) } else { 0 };
            // Capable but unwilling agents never volunteer; when the requester
            // cannot pay, nobody does.
            let idle = if can_pay { unwilling } else { unwilling + willing };
            capable += vt + binomial(rng, idle, beta);
            *v = vt;
            total_volunteers += vt;
            weight += self.spec.agent_type(t).chi() * vt as f64;
        }

        if total_volunteers == 0 {
            return RoundOutcome {
                requester,
                capable,
                volunteers: 0,
                winner: None,
                paid: false,
            };
        }

        let mut u = rng.random::<f64>() * weight;
        let mut wt = types - 1;
        for (t, &v) in volunteers.iter().enumerate() {
            let w = self.spec.agent_type(t).chi() * v as f64;
            if v > 0 && u < w {
                wt = t;
                break;
            }
            u -= w;
        }
        while volunteers[wt] == 0 {
            wt -= 1;
        }

        // Volunteers of a type are a uniform subset of its willing agents, so
        // the winner is uniform over the willing set minus the requester.
        let set = &self.willing[wt];
        let winner = if wt == rt && requester_willing {
            let skip = self.position[requester as usize] as usize;
            let mut r = rng.random_range(0..set.len() - 1);
            if r >= skip {
                r += 1;
            }
            set[r]
        } else {
            set[rng.random_range(0..set.len())]
        } as usize;

        let r = requester as usize;
        self.set_holding(r, self.holdings[r] - 1);
        self.set_holding(winner, self.holdings[winner] + 1);
        RoundOutcome {
            requester,
            capable,
            volunteers: total_volunteers,
            winner: Some(winner as u64),
            paid: true,
        }
    }
}

/// Plays a single round from `state`.
pub fn step<R: Rng + ?Sized>(
    spec: &GameSpec,
    k: &ThresholdVector,
    state: &WealthState,
    rng: &mut R,
) -> Result<(WealthState, RoundOutcome)> {
    let mut sim = Simulator::new(spec, k, state.clone())?;
    let outcome = sim.step(rng);
    Ok((sim.state(), outcome))
}

/// One observation of a running simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: u64,
    pub distance_l2: f64,
    pub distance_l2_squared: f64,
    pub volunteers: u64,
    pub frozen: bool,
}

/// Controls for [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub rounds: u64,
    /// Observe every `cadence` rounds (round 0 and the last round always).
    pub cadence: u64,
    /// Threshold on the squared distance for `first_within`.
    pub epsilon: f64,
    /// Stop at the first observation within `epsilon`.
    pub stop_when_within: bool,
    /// Keep every observation in the summary.
    pub record_trace: bool,
}

impl SimulationOptions {
    pub fn new(rounds: u64) -> Self {
        SimulationOptions {
            rounds,
            cadence: 1,
            epsilon: 1e-3,
            stop_when_within: false,
            record_trace: false,
        }
    }
}

/// Distance statistics of a simulated trajectory against a target distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub rounds: u64,
    pub observations: u64,
    pub max_distance_squared: f64,
    pub max_distance_l2: f64,
    pub mean_distance_squared: f64,
    pub mean_distance_l2: f64,
    pub first_within: Option<u64>,
    pub final_distance_squared: f64,
    pub final_distance_l2: f64,
    pub final_excess: f64,
    pub paid_rounds: u64,
    pub trace: Vec<TraceRow>,
}

impl SimulationSummary {
    pub fn write_trace_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "round,distance_L2,distance_L2_squared,volunteers,frozen_flag")?;
        for row in &self.trace {
            writeln!(
                out,
                "{},{:.10e},{:.10e},{},{}",
                row.round,
                row.distance_l2,
                row.distance_l2_squared,
                row.volunteers,
                u8::from(row.frozen)
            )?;
        }
        Ok(())
    }
}

/// Runs `options.rounds` rounds from the simulator's current state, observing
/// the distance to `target` at the chosen cadence.
pub fn simulate<R: Rng + ?Sized>(
    sim: &mut Simulator,
    target: &MoneyDistribution,
    options: &SimulationOptions,
    rng: &mut R,
) -> Result<SimulationSummary> {
    if !target.same_shape(&sim.empirical().distribution) {
        return Err(ScripError::IndexMismatch);
    }
    let cadence = options.cadence.max(1);
    let mut summary = SimulationSummary {
        rounds: 0,
        observations: 0,
        max_distance_squared: 0.0,
        max_distance_l2: 0.0,
        mean_distance_squared: 0.0,
        mean_distance_l2: 0.0,
        first_within: None,
        final_distance_squared: 0.0,
        final_distance_l2: 0.0,
        final_excess: 0.0,
        paid_rounds: 0,
        trace: Vec::new(),
    };
    let mut sum_sq = 0.0;
    let mut sum_l2 = 0.0;
    let mut observe = |sim: &Simulator, summary: &mut SimulationSummary, volunteers: u64| {
        let sq = sim.squared_distance_to(target);
        let l2 = sq.sqrt();
        summary.observations += 1;
        summary.max_distance_squared = summary.max_distance_squared.max(sq);
        summary.max_distance_l2 = summary.max_distance_l2.max(l2);
        sum_sq += sq;
        sum_l2 += l2;
        summary.final_distance_squared = sq;
        summary.final_distance_l2 = l2;
        if summary.first_within.is_none() && sq < options.epsilon {
            summary.first_within = Some(summary.rounds);
        }
        if options.record_trace {
            summary.trace.push(TraceRow {
                round: summary.rounds,
                distance_l2: l2,
                distance_l2_squared: sq,
                volunteers,
                frozen: sim.frozen(),
            });
        }
    };

    observe(sim, &mut summary, 0);
    let mut done = options.stop_when_within && summary.first_within.is_some();
    while !done && summary.rounds < options.rounds {
        let outcome = sim.step(rng);
        summary.rounds += 1;
        summary.paid_rounds += u64::from(outcome.paid);
        if summary.rounds.is_multiple_of(cadence) || summary.rounds == options.rounds {
            observe(sim, &mut summary, outcome.volunteers);
            done = options.stop_when_within && summary.first_within.is_some();
        }
    }
    summary.mean_distance_squared = sum_sq / summary.observations as f64;
    summary.mean_distance_l2 = sum_l2 / summary.observations as f64;
    summary.final_excess = sim.excess_counts().iter().sum::<u64>() as f64 / sim.spec().agents() as f64;
    Ok(summary)
}
