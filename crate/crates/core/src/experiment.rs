//! Experiment configurations and the convergence studies: maximum distance to
//! `d*` for several population sizes, convergence from an extreme start, and
//! time to get within `epsilon` as a function of `n`.
//!
//! Distances are sums of squared differences `sum |d - d*|^2`; the Euclidean
//! norm is reported alongside.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::{simulate, SimulationOptions, Simulator, WealthState};
use crate::entropy::{min_relent_distribution, nearest_realizable_counts, MoneyDistribution};
use crate::error::{Result, ScripError};
use crate::model::{build_game_spec, GameSpec, Money, RawAgentType, ThresholdVector};

/// Observe every round when tracking the maximum distance.
pub const FIG2_CADENCE: u64 = 1;
/// Observations per agent-round in the extreme-start study (cadence `h n / 10`).
pub const FIG3_OBSERVATIONS_PER_AGENT_ROUND: u64 = 10;
/// Observe every round when timing the approach to `d*`.
pub const FIG4_CADENCE: u64 = 1;
/// Closeness target for the timing study.
pub const FIG4_EPSILON: f64 = 1e-3;

pub const FIG2_ROUNDS: u64 = 1_000_000;
pub const FIG2_NS: [u64; 6] = [1000, 2000, 5000, 10_000, 15_000, 25_000];
pub const FIG3_N: u64 = 1000;
pub const FIG3_ROUNDS_PER_AGENT: u64 = 10;
pub const FIG_REPLICAS: u64 = 10;
pub const FIG4_NS: [u64; 5] = [1000, 2000, 3000, 4000, 5000];
pub const FIG4_MAX_ROUNDS_PER_AGENT: u64 = 50;

/// Cadence used by the extreme-start study for a population of `agents`.
pub fn fig3_cadence(agents: u64) -> u64 {
    (agents / FIG3_OBSERVATIONS_PER_AGENT_ROUND).max(1)
}

/// One agent type with `beta = rho = chi = 1` and `m = 2`, used with `k = 5`.
pub fn reference_spec(n: u64) -> Result<GameSpec> {
    build_game_spec(
        vec![RawAgentType {
            alpha: 0.1,
            beta: 1.0,
            gamma: 1.0,
            delta: 0.95,
            rho: 1.0,
            chi: 1.0,
        }],
        vec![1.0],
        1,
        Money::integer(2)?,
        n,
    )
    .map(|b| b.spec)
}

pub fn reference_thresholds() -> ThresholdVector {
    ThresholdVector::new(vec![5])
}

/// Independent generator for replica `stream` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Distribution,
    BestReply,
    Equilibrium,
    ExactStationary,
    Fig2,
    Fig3,
    Fig4,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::Simulate,
        Mode::Distribution,
        Mode::BestReply,
        Mode::Equilibrium,
        Mode::ExactStationary,
        Mode::Fig2,
        Mode::Fig3,
        Mode::Fig4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Distribution => "distribution",
            Mode::BestReply => "best-reply",
            Mode::Equilibrium => "equilibrium",
            Mode::ExactStationary => "exact-stationary",
            Mode::Fig2 => "fig2",
            Mode::Fig3 => "fig3",
            Mode::Fig4 => "fig4",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = ScripError;

    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ScripError::InvalidSpec(format!("unknown mode {s:?}")))
    }
}

/// Fully resolved experiment; the hash of its JSON form tags every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub spec: GameSpec,
    pub seed: u64,
    pub thresholds: Option<ThresholdVector>,
    pub rounds: Option<u64>,
    pub replicas: u64,
    pub cadence: Option<u64>,
    pub ns: Vec<u64>,
    pub cap: Option<u64>,
    pub epsilon: f64,
}

impl ExperimentConfig {
    /// Defaults for `mode`; fig2, fig3 and fig4 get the reference settings.
    pub fn new(mode: Mode, spec: GameSpec, seed: u64) -> Self {
        let (ns, replicas, rounds) = match mode {
            Mode::Fig2 => (FIG2_NS.to_vec(), 1, Some(FIG2_ROUNDS)),
            Mode::Fig3 => (vec![FIG3_N], FIG_REPLICAS, Some(FIG3_ROUNDS_PER_AGENT * FIG3_N)),
            Mode::Fig4 => (FIG4_NS.to_vec(), FIG_REPLICAS, None),
            _ => (Vec::new(), 1, None),
        };
        ExperimentConfig {
            mode,
            spec,
            seed,
            thresholds: None,
            rounds,
            replicas,
            cadence: None,
            ns,
            cap: None,
            epsilon: FIG4_EPSILON,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Comment line opening every CSV output.
    pub fn csv_preamble(&self) -> String {
        format!(
            "# mode={} seed={} config_sha256={}",
            self.mode,
            self.seed,
            self.config_hash()
        )
    }

    /// Thresholds to use, or a validation error naming the missing field.
    pub fn require_thresholds(&self) -> Result<ThresholdVector> {
        let k = self
            .thresholds
            .clone()
            .ok_or_else(|| ScripError::InvalidSpec("thresholds are required for this mode".into()))?;
        k.check_len(&self.spec)?;
        Ok(k)
    }
}

fn starting_point(spec: &GameSpec, target: &MoneyDistribution) -> Result<WealthState> {
    let counts = nearest_realizable_counts(target, spec)?;
    WealthState::from_counts(spec, &counts)
}

/// Largest distance to `d*` seen over a run, per population size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Row {
    pub n: u64,
    pub rounds: u64,
    pub max_distance: f64,
    pub max_distance_l2: f64,
    pub mean_distance: f64,
    pub initial_distance: f64,
}

/// For each `n`: start at the realizable distribution nearest `d*`, run
/// `rounds` rounds and record the largest distance observed.
pub fn run_fig2(
    spec: &GameSpec,
    k: &ThresholdVector,
    ns: &[u64],
    rounds: u64,
    seed: u64,
) -> Result<Vec<Fig2Row>> {
    ns.par_iter()
        .enumerate()
        .map(|(stream, &n)| {
            let spec = spec.with_replicas(n)?;
            let target = min_relent_distribution(&spec, k)?;
            let mut sim = Simulator::new(&spec, k, starting_point(&spec, &target)?)?;
            let mut options = SimulationOptions::new(rounds);
            options.cadence = FIG2_CADENCE;
            let mut rng = replica_rng(seed, stream as u64);
            let initial_distance = sim.squared_distance_to(&target);
            let s = simulate(&mut sim, &target, &options, &mut rng)?;
            Ok(Fig2Row {
                n,
                rounds,
                max_distance: s.max_distance_squared,
                max_distance_l2: s.max_distance_l2,
                mean_distance: s.mean_distance_squared,
                initial_distance,
            })
        })
        .collect()
}

pub fn write_fig2_csv<W: Write>(rows: &[Fig2Row], preamble: &str, mut out: W) -> io::Result<()> {
    writeln!(out, "{preamble}")?;
    writeln!(out, "n,max_distance,max_distance_l2,mean_distance,initial_distance,rounds")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.10e},{:.10e},{:.10e},{:.10e},{}",
            r.n, r.max_distance, r.max_distance_l2, r.mean_distance, r.initial_distance, r.rounds
        )?;
    }
    Ok(())
}

/// Average distance to `d*` across replicas at one observation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    pub round: u64,
    pub rounds_per_agent: f64,
    /// Mean over replicas of each replica's distance.
    pub avg_distance: f64,
    pub avg_distance_l2: f64,
    /// Distance of the replica-averaged distribution.
    pub distance_of_average: f64,
}

/// Runs `replicas` chains from the extreme start and averages their distance
/// to `d*` every `h n / 10` rounds.
pub fn run_fig3(
    spec: &GameSpec,
    k: &ThresholdVector,
    replicas: u64,
    rounds: u64,
    seed: u64,
) -> Result<Vec<Fig3Row>> {
    if replicas == 0 {
        return Err(ScripError::InvalidSpec("at least one replica is required".into()));
    }
    let target = min_relent_distribution(spec, k)?;
    let start = WealthState::extreme(spec, k)?;
    let cadence = fig3_cadence(spec.agents());
    let runs = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<(u64, f64, MoneyDistribution)>> {
            let mut rng = replica_rng(seed, r);
            let mut sim = Simulator::new(spec, k, start.clone())?;
            let mut out = vec![(0, sim.squared_distance_to(&target), sim.empirical().distribution)];
            while sim.round() < rounds {
                let chunk = cadence.min(rounds - sim.round());
                let mut options = SimulationOptions::new(chunk);
                options.cadence = chunk;
                let s = simulate(&mut sim, &target, &options, &mut rng)?;
                out.push((sim.round(), s.final_distance_squared, sim.empirical().distribution));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let agents = spec.agents() as f64;
    let count = replicas as f64;
    (0..runs[0].len())
        .map(|obs| {
            let round = runs[0][obs].0;
            let avg_distance = runs.iter().map(|r| r[obs].1).sum::<f64>() / count;
            let avg_distance_l2 = runs.iter().map(|r| r[obs].1.sqrt()).sum::<f64>() / count;
            let mut mean = runs[0][obs].2.levels().to_vec();
            for run in &runs[1..] {
                for (row, other) in mean.iter_mut().zip(run[obs].2.levels()) {
                    row.iter_mut().zip(other).for_each(|(a, b)| *a += b);
                }
            }
            mean.iter_mut().flatten().for_each(|v| *v /= count);
            let distance_of_average = MoneyDistribution::new(mean).squared_distance(&target)?;
            Ok(Fig3Row {
                round,
                rounds_per_agent: round as f64 / agents,
                avg_distance,
                avg_distance_l2,
                distance_of_average,
            })
        })
        .collect()
}

/// Linear interpolation of the replica-averaged distance at `rounds_per_agent`.
pub fn fig3_distance_at(rows: &[Fig3Row], rounds_per_agent: f64) -> Option<f64> {
    rows.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        if a.rounds_per_agent <= rounds_per_agent && rounds_per_agent <= b.rounds_per_agent {
            let span = b.rounds_per_agent - a.rounds_per_agent;
            let s = if span > 0.0 { (rounds_per_agent - a.rounds_per_agent) / span } else { 0.0 };
            Some(a.avg_distance + s * (b.avg_distance - a.avg_distance))
        } else {
            None
        }
    })
}

pub fn write_fig3_csv<W: Write>(rows: &[Fig3Row], preamble: &str, mut out: W) -> io::Result<()> {
    writeln!(out, "{preamble}")?;
    writeln!(out, "rounds_per_agent,avg_distance,avg_distance_l2,distance_of_average,round")?;
    for r in rows {
        writeln!(
            out,
            "{:.4},{:.10e},{:.10e},{:.10e},{}",
            r.rounds_per_agent, r.avg_distance, r.avg_distance_l2, r.distance_of_average, r.round
        )?;
    }
    Ok(())
}

/// Rounds needed to come within `epsilon` of `d*`, averaged over replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4Row {
    pub n: u64,
    pub mean_rounds: f64,
    pub sd_rounds: f64,
    pub replicas: u64,
    /// Replicas that never got within `epsilon` (counted at the round limit).
    pub censored: u64,
}

/// Least-squares line `rounds = intercept + slope n` over every replica.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub points: usize,
}

pub fn least_squares(points: &[(f64, f64)]) -> Result<LinearFit> {
    let len = points.len() as f64;
    if points.len() < 3 {
        return Err(ScripError::InvalidSpec("a line fit needs at least three points".into()));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / len;
    let my = points.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(ScripError::InvalidSpec("a line fit needs distinct x values".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(LinearFit {
        slope,
        intercept,
        slope_se: (sse / (len - 2.0) / sxx).sqrt(),
        points: points.len(),
    })
}

/// For each `n`, runs `replicas` chains from the extreme start until the
/// distance first drops below `epsilon`, then fits rounds against `n`.
pub fn run_fig4(
    spec: &GameSpec,
    k: &ThresholdVector,
    ns: &[u64],
    replicas: u64,
    epsilon: f64,
    seed: u64,
) -> Result<(Vec<Fig4Row>, LinearFit)> {
    if replicas == 0 {
        return Err(ScripError::InvalidSpec("at least one replica is required".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..ns.len())
        .flat_map(|i| (0..replicas).map(move |r| (i, r)))
        .collect();
    let times = jobs
        .par_iter()
        .map(|&(i, r)| -> Result<(u64, bool)> {
            let spec = spec.with_replicas(ns[i])?;
            let target = min_relent_distribution(&spec, k)?;
            let mut sim = Simulator::new(&spec, k, WealthState::extreme(&spec, k)?)?;
            let mut options = SimulationOptions::new(FIG4_MAX_ROUNDS_PER_AGENT * spec.agents());
            options.cadence = FIG4_CADENCE;
            options.epsilon = epsilon;
            options.stop_when_within = true;
            let mut rng = replica_rng(seed, i as u64 * replicas + r);
            let s = simulate(&mut sim, &target, &options, &mut rng)?;
            Ok(match s.first_within {
                Some(t) => (t, false),
                None => (s.rounds, true),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(ns.len());
    let mut points = Vec::with_capacity(times.len());
    for (i, &n) in ns.iter().enumerate() {
        let chunk = &times[i * replicas as usize..(i + 1) * replicas as usize];
        let values: Vec<f64> = chunk.iter().map(|&(t, _)| t as f64).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64
        } else {
            0.0
        };
        let agents = spec.with_replicas(n)?.agents() as f64;
        points.extend(values.iter().map(|&v| (agents, v)));
        rows.push(Fig4Row {
            n,
            mean_rounds: mean,
            sd_rounds: var.sqrt(),
            replicas,
            censored: chunk.iter().filter(|c| c.1).count() as u64,
        });
    }
    let fit = least_squares(&points)?;
    Ok((rows, fit))
}

pub fn write_fig4_csv<W: Write>(
    rows: &[Fig4Row],
    fit: &LinearFit,
    preamble: &str,
    mut out: W,
) -> io::Result<()> {
    writeln!(out, "{preamble}")?;
    writeln!(
        out,
        "# fit rounds = {:.6} + {:.6} * agents (slope se {:.6}, {} points)",
        fit.intercept, fit.slope, fit.slope_se, fit.points
    )?;
    writeln!(out, "n,rounds_to_within,sd_rounds,replicas,censored")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.3},{:.3},{},{}",
            r.n, r.mean_rounds, r.sd_rounds, r.replicas, r.censored
        )?;
    }
    Ok(())
}
