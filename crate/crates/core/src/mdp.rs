//! Single-agent best replies.
//!
//! An agent of type `t` facing a population at its steady state sees a simple
//! birth-death process on its own wealth: it earns a dollar with probability
//! `p_u` per round while willing to work and spends one with probability `p_d`
//! when it has money. Its best threshold follows from the discounted ruin
//! factor `E[z^J]`, where `J` is the time to go broke starting from the
//! threshold.

use serde::{Deserialize, Serialize};

use crate::entropy::{solve_lambda, tilted_distribution};
use crate::error::{Result, ScripError};
use crate::model::{per_round_discount, GameSpec, ThresholdVector};

/// Allowed gap between the two routes to `p_u`.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

/// Stopping tolerance of value iteration, relative to the largest value.
pub const VALUE_ITERATION_TOLERANCE: f64 = 1e-12;

const MAX_SWEEPS: usize = 20_000_000;

/// Per-round probabilities seen by one agent of a given type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceProbabilities {
    /// Chance of earning a dollar in a round while willing to volunteer.
    pub p_u: f64,
    /// Chance of having a request satisfied in a round, given money.
    pub p_d: f64,
    /// Expected number of volunteers of each type.
    pub upsilon: Vec<f64>,
    pub lambda: f64,
    /// `p_d * lambda * omega_t`, which must equal `p_u`.
    pub p_u_identity: f64,
}

/// Computes `p_u` from the volunteer masses and cross-checks it against
/// `p_d lambda omega_t`.
pub fn choice_probabilities(
    spec: &GameSpec,
    k: &ThresholdVector,
    t: usize,
) -> Result<ChoiceProbabilities> {
    k.check_len(spec)?;
    if t >= spec.num_types() {
        return Err(ScripError::InvalidSpec(format!("no type {t}")));
    }
    if k.is_zero() {
        return Err(ScripError::NoVolunteers);
    }
    let solution = solve_lambda(spec, k)?;
    let star = tilted_distribution(spec, k, &solution);
    let n = spec.n() as f64;

    let upsilon: Vec<f64> = spec
        .types()
        .iter()
        .enumerate()
        .map(|(s, ty)| {
            let top = star.get(s, k.get(s) as usize);
            ty.beta() * (spec.fractions()[s] - top) * n
        })
        .collect();
    let paying: f64 = spec
        .types()
        .iter()
        .enumerate()
        .map(|(s, ty)| ty.rho() * (spec.fractions()[s] - star.get(s, 0)))
        .sum();
    let volunteer_weight: f64 = spec
        .types()
        .iter()
        .zip(&upsilon)
        .map(|(ty, u)| ty.chi() * u)
        .sum();
    if !(volunteer_weight > 0.0) {
        return Err(ScripError::NoVolunteers);
    }
    let me = spec.agent_type(t);
    let p_u = paying * me.chi() * me.beta() / volunteer_weight;
    let p_d = me.rho() / n;
    let p_u_identity = p_d * solution.lambda * me.omega();

    if !((0.0..1.0).contains(&p_u) && p_d > 0.0 && p_u + p_d <= 1.0) {
        return Err(ScripError::InvalidProbabilities { p_u, p_d });
    }
    if (p_u - p_u_identity).abs() > IDENTITY_TOLERANCE {
        return Err(ScripError::NumericalAssertion(format!(
            "p_u = {p_u} but p_d lambda omega = {p_u_identity}"
        )));
    }
    Ok(ChoiceProbabilities {
        p_u,
        p_d,
        upsilon,
        lambda: solution.lambda,
        p_u_identity,
    })
}

fn check_walk(p_u: f64, p_d: f64, z: f64) -> Result<()> {
    if !(p_u >= 0.0 && p_d > 0.0 && p_u + p_d <= 1.0) {
        return Err(ScripError::InvalidProbabilities { p_u, p_d });
    }
    if !(z > 0.0 && z < 1.0) {
        return Err(ScripError::InvalidSpec(format!("discount z = {z} must lie in (0, 1)")));
    }
    Ok(())
}

/// Successive ratios `b_j = E[z^J(j+1)] / E[z^J(j)]` read from the top state
/// down.
///
/// For a walk capped at `kappa`, the ratio `phi_i / phi_{i-1}` only depends on
/// the distance `kappa - i` to the cap, so `E[z^J(kappa)]` is the product of the
/// first `kappa` terms of this sequence.
#[derive(Debug, Clone, Copy)]
pub struct RuinRatios {
    z_p_d: f64,
    z_p_u: f64,
    diagonal: f64,
    current: f64,
}

impl RuinRatios {
    pub fn new(p_u: f64, p_d: f64, z: f64) -> Result<Self> {
        check_walk(p_u, p_d, z)?;
        Ok(RuinRatios {
            z_p_d: z * p_d,
            z_p_u: z * p_u,
            diagonal: 1.0 - z * (1.0 - p_u - p_d),
            current: z * p_d / (1.0 - z * (1.0 - p_d)),
        })
    }
}

impl Iterator for RuinRatios {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let out = self.current;
        self.current = self.z_p_d / (self.diagonal - self.z_p_u * self.current);
        Some(out)
    }
}

/// `E[z^J]` for an agent starting with `kappa` dollars that volunteers below
/// `kappa` and stops at `kappa`; `J` is the round its money runs out.
pub fn discounted_ruin_factor(kappa: u64, p_u: f64, p_d: f64, z: f64) -> Result<f64> {
    let ratios = RuinRatios::new(p_u, p_d, z)?;
    let log: f64 = ratios.take(kappa as usize).map(f64::ln).sum();
    Ok(log.exp())
}

/// Optimal threshold of one type against thresholds `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestReplyReport {
    #[serde(rename = "type")]
    pub type_index: usize,
    pub kappa: u64,
    pub lhs_alpha: f64,
    /// `gamma E[z^J(kappa)]`; equals `gamma` at `kappa = 0`.
    pub rhs_at_kappa: f64,
    pub rhs_at_kappa_plus_1: f64,
    pub z: f64,
    pub p_u: f64,
    pub p_d: f64,
    pub lambda: f64,
    /// The inequality still held at the cap.
    pub capped: bool,
}

/// Largest `kappa <= cap` with `alpha <= gamma E[z^J(kappa)]`, scanning up from
/// one; zero when `kappa = 1` already fails.
pub fn best_reply_threshold(
    spec: &GameSpec,
    k: &ThresholdVector,
    t: usize,
    cap: u64,
) -> Result<BestReplyReport> {
    if cap == 0 {
        return Err(ScripError::InvalidSpec("best-reply cap must be positive".into()));
    }
    let probs = choice_probabilities(spec, k, t)?;
    let ty = spec.agent_type(t);
    let z = per_round_discount(ty.delta(), spec.n());
    let (alpha, gamma) = (ty.alpha(), ty.gamma());

    let mut ratios = RuinRatios::new(probs.p_u, probs.p_d, z)?;
    let mut log_phi = 0.0;
    let mut kappa = 0;
    let mut next = loop {
        let ratio = ratios.next().expect("infinite sequence");
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(ScripError::NumericalAssertion(format!(
                "ruin factor ratio {ratio} outside (0, 1) at kappa {}",
                kappa + 1
            )));
        }
        let candidate = log_phi + ratio.ln();
        if alpha > gamma * candidate.exp() {
            break candidate.exp();
        }
        log_phi = candidate;
        kappa += 1;
        if kappa == cap {
            break (log_phi + ratios.next().expect("infinite sequence").ln()).exp();
        }
    };
    let at_kappa = log_phi.exp();
    if next >= at_kappa {
        return Err(ScripError::NumericalAssertion(format!(
            "E[z^J] not decreasing at kappa {kappa}"
        )));
    }
    next *= gamma;
    Ok(BestReplyReport {
        type_index: t,
        kappa,
        lhs_alpha: alpha,
        rhs_at_kappa: gamma * at_kappa,
        rhs_at_kappa_plus_1: next,
        z,
        p_u: probs.p_u,
        p_d: probs.p_d,
        lambda: probs.lambda,
        capped: kappa == cap && alpha <= next,
    })
}

/// Immediate expected reward of the wealth MDP in state `s`.
pub fn reward(s: u64, volunteer: bool, alpha: f64, gamma: f64, p_u: f64, p_d: f64) -> f64 {
    let served = if s > 0 { gamma * p_d } else { 0.0 };
    if volunteer {
        served - alpha * p_u
    } else {
        served
    }
}

/// Optimal policy of the single-agent MDP on wealth levels `0..=states`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    /// `true` where volunteering is optimal.
    pub volunteer: Vec<bool>,
    pub values: Vec<f64>,
    /// Number of leading states where the agent volunteers.
    pub threshold: u64,
    pub sweeps: usize,
    /// Largest `u(s+2) + u(s) - 2u(s+1)`; non-positive for a concave value.
    pub concavity_gap: f64,
}

/// Value iteration on the wealth MDP with discount `z`.
///
/// Rewards are `gamma p_d` for a satisfied request (needs `s > 0`) and
/// `-alpha p_u` for volunteering; volunteering moves up with probability `p_u`
/// and a request moves down with probability `p_d`. Each state's self-loop is
/// solved out before the Gauss-Seidel update, which leaves the fixed point
/// unchanged. Errors if the optimal policy is not a threshold policy.
pub fn value_iteration_policy(
    spec: &GameSpec,
    k: &ThresholdVector,
    t: usize,
    states: u64,
) -> Result<PolicyReport> {
    let probs = choice_probabilities(spec, k, t)?;
    let ty = spec.agent_type(t);
    let z = per_round_discount(ty.delta(), spec.n());
    let (alpha, gamma) = (ty.alpha(), ty.gamma());
    let (p_u, p_d) = (probs.p_u, probs.p_d);
    check_walk(p_u, p_d, z)?;
    let top = states as usize;
    let mut u = vec![0.0; top + 1];

    let update = |u: &[f64], s: usize| -> (f64, f64) {
        let down = if s > 0 { p_d } else { 0.0 };
        let below = if s > 0 { z * down * u[s - 1] } else { 0.0 };
        let idle = (reward(s as u64, false, alpha, gamma, p_u, p_d) + below) / (1.0 - z * (1.0 - down));
        let work = if s < top {
            (reward(s as u64, true, alpha, gamma, p_u, p_d) + below + z * p_u * u[s + 1])
                / (1.0 - z * (1.0 - down - p_u))
        } else {
            f64::NEG_INFINITY
        };
        (idle, work)
    };

    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut change: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for s in 0..=top {
            let (idle, work) = update(&u, s);
            let value = idle.max(work);
            change = change.max((value - u[s]).abs());
            scale = scale.max(value.abs());
            u[s] = value;
        }
        if change <= VALUE_ITERATION_TOLERANCE * scale {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(ScripError::NotConverged {
                what: "value iteration",
                iterations: sweeps,
                residual: change,
            });
        }
    }

    // Volunteering is optimal iff z (u(s+1) - u(s)) >= alpha.
    let volunteer: Vec<bool> = (0..=top)
        .map(|s| s < top && z * (u[s + 1] - u[s]) >= alpha)
        .collect();
    let threshold = volunteer.iter().take_while(|&&v| v).count();
    if volunteer[threshold..].iter().any(|&v| v) {
        return Err(ScripError::NumericalAssertion(format!(
            "optimal policy for type {t} is not a threshold policy"
        )));
    }
    let concavity_gap = u
        .windows(3)
        .map(|w| w[2] + w[0] - 2.0 * w[1])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PolicyReport {
        volunteer,
        values: u,
        threshold: threshold as u64,
        sweeps,
        concavity_gap,
    })
}
