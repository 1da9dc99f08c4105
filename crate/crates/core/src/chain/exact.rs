use std::collections::{HashMap, VecDeque};
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScripError};
use crate::model::{GameSpec, ThresholdVector};

/// Default bound on the number of enumerated states.
pub const DEFAULT_STATE_CAP: usize = 200_000;

/// Closed form and solved vector may differ by at most this much (L-infinity).
pub const STATIONARY_AGREEMENT: f64 = 1e-8;

const DENSE_SOLVE_LIMIT: usize = 2_000;
const GAUSS_SEIDEL_TOL: f64 = 1e-15;
const GAUSS_SEIDEL_SWEEPS: usize = 200_000;

/// Sparse row-stochastic matrix; each row lists `(column, probability)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, x: usize) -> &[(usize, f64)] {
        &self.rows[x]
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.rows[x]
            .iter()
            .find(|&&(c, _)| c == y)
            .map_or(0.0, |&(_, p)| p)
    }

    fn incoming(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.rows.len()];
        for (x, row) in self.rows.iter().enumerate() {
            for &(y, p) in row {
                cols[y].push((x, p));
            }
        }
        cols
    }
}

/// All holdings vectors with `x_i <= k_{type(i)}` and total `m h n`, in
/// lexicographic order.
pub fn enumerate_states(spec: &GameSpec, k: &ThresholdVector, cap: usize) -> Result<Vec<Vec<u64>>> {
    k.check_len(spec)?;
    let agents = spec.agents() as usize;
    let bounds: Vec<u64> = (0..agents as u64).map(|a| k.get(spec.type_of_agent(a))).collect();
    // suffix[i] = most money agents i.. can hold
    let mut suffix = vec![0u64; agents + 1];
    for i in (0..agents).rev() {
        suffix[i] = suffix[i + 1] + bounds[i];
    }
    let mut states = Vec::new();
    let mut current = vec![0u64; agents];

    fn fill(
        i: usize,
        left: u64,
        bounds: &[u64],
        suffix: &[u64],
        current: &mut Vec<u64>,
        states: &mut Vec<Vec<u64>>,
        cap: usize,
    ) -> Result<()> {
        if i == bounds.len() {
            if left == 0 {
                if states.len() == cap {
                    return Err(ScripError::StateSpaceTooLarge { cap });
                }
                states.push(current.clone());
            }
            return Ok(());
        }
        let lo = left.saturating_sub(suffix[i + 1]);
        let hi = bounds[i].min(left);
        for x in lo..=hi {
            current[i] = x;
            fill(i + 1, left - x, bounds, suffix, current, states, cap)?;
        }
        current[i] = 0;
        Ok(())
    }

    fill(0, spec.total_money(), &bounds, &suffix, &mut current, &mut states, cap)?;
    Ok(states)
}

fn binomial_pmf(n: u64, v: u64, p: f64) -> f64 {
    let mut c = 1.0;
    for j in 0..v {
        c = c * (n - j) as f64 / (j + 1) as f64;
    }
    c * p.powi(v as i32) * (1.0 - p).powi((n - v) as i32)
}

/// Probability that each agent is paid when `requester` asks for service in
/// state `holdings`. Entries for the requester and unwilling agents are zero.
pub fn winner_probabilities(
    spec: &GameSpec,
    k: &ThresholdVector,
    holdings: &[u64],
    requester: usize,
) -> Vec<f64> {
    let mut probs = vec![0.0; holdings.len()];
    if holdings[requester] == 0 {
        return probs;
    }
    let types = spec.num_types();
    let mut willing: Vec<Vec<usize>> = vec![Vec::new(); types];
    for (j, &x) in holdings.iter().enumerate() {
        let t = spec.type_of_agent(j as u64);
        if j != requester && x < k.get(t) {
            willing[t].push(j);
        }
    }
    // Enumerate volunteer counts per type; given the counts, the winning type
    // is chi-weighted and the winner uniform over that type's willing agents.
    let mut type_win = vec![0.0; types];
    let mut counts = vec![0u64; types];
    fn walk(
        t: usize,
        prob: f64,
        spec: &GameSpec,
        willing: &[Vec<usize>],
        counts: &mut Vec<u64>,
        type_win: &mut [f64],
    ) {
        if t == willing.len() {
            let weight: f64 = counts
                .iter()
                .enumerate()
                .map(|(s, &v)| spec.agent_type(s).chi() * v as f64)
                .sum();
            if weight > 0.0 {
                for (s, &v) in counts.iter().enumerate() {
                    type_win[s] += prob * spec.agent_type(s).chi() * v as f64 / weight;
                }
            }
            return;
        }
        let w = willing[t].len() as u64;
        let beta = spec.agent_type(t).beta();
        for v in 0..=w {
            let pv = binomial_pmf(w, v, beta);
            if pv == 0.0 {
                continue;
            }
            counts[t] = v;
            walk(t + 1, prob * pv, spec, willing, counts, type_win);
        }
        counts[t] = 0;
    }
    walk(0, 1.0, spec, &willing, &mut counts, &mut type_win);
    for (t, set) in willing.iter().enumerate() {
        for &j in set {
            probs[j] = type_win[t] / set.len() as f64;
        }
    }
    probs
}

/// Builds the exact transition matrix of the chain restricted to `states`.
pub fn transition_matrix(
    spec: &GameSpec,
    k: &ThresholdVector,
    states: &[Vec<u64>],
) -> Result<TransitionMatrix> {
    let index: HashMap<&[u64], usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_slice(), i))
        .collect();
    let agents = spec.agents() as usize;
    let request: Vec<f64> = (0..agents as u64)
        .map(|a| spec.agent_type(spec.type_of_agent(a)).rho() / agents as f64)
        .collect();
    let mut rows = Vec::with_capacity(states.len());
    let mut next = vec![0u64; agents];
    for (x, holdings) in states.iter().enumerate() {
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut moved = 0.0;
        for i in 0..agents {
            let win = winner_probabilities(spec, k, holdings, i);
            for (j, &p) in win.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                next.copy_from_slice(holdings);
                next[i] -= 1;
                next[j] += 1;
                let y = *index.get(next.as_slice()).ok_or_else(|| {
                    ScripError::NumericalAssertion("transition leaves the state space".into())
                })?;
                let prob = request[i] * p;
                moved += prob;
                match row.iter_mut().find(|(c, _)| *c == y) {
                    Some(entry) => entry.1 += prob,
                    None => row.push((y, prob)),
                }
            }
        }
        let stay = 1.0 - moved;
        if stay > 0.0 {
            row.push((x, stay));
        }
        row.sort_by_key(|&(c, _)| c);
        rows.push(row);
    }
    Ok(TransitionMatrix { rows })
}

/// `pi(x) = prod_i omega_{type(i)}^{x_i} / Z`.
pub fn closed_form_stationary(spec: &GameSpec, states: &[Vec<u64>]) -> Vec<f64> {
    let log_omega: Vec<f64> = (0..spec.agents())
        .map(|a| spec.agent_type(spec.type_of_agent(a)).omega().ln())
        .collect();
    let logs: Vec<f64> = states
        .iter()
        .map(|s| s.iter().zip(&log_omega).map(|(&x, lw)| x as f64 * lw).sum())
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

fn reachable(adjacency: &[Vec<(usize, f64)>]) -> usize {
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(x) = queue.pop_front() {
        for &(y, p) in &adjacency[x] {
            if p > 0.0 && !seen[y] {
                seen[y] = true;
                count += 1;
                queue.push_back(y);
            }
        }
    }
    count
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Checks strong connectivity and returns the period (1 when aperiodic).
pub fn chain_period(matrix: &TransitionMatrix) -> Result<u64> {
    let states = matrix.len();
    if states == 0 {
        return Err(ScripError::ReducibleChain { reachable: 0, states });
    }
    let forward = reachable(&matrix.rows);
    let backward = reachable(&matrix.incoming());
    if forward < states || backward < states {
        return Err(ScripError::ReducibleChain {
            reachable: forward.min(backward),
            states,
        });
    }
    let mut level = vec![u64::MAX; states];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(x) = queue.pop_front() {
        for &(y, p) in matrix.row(x) {
            if p > 0.0 && level[y] == u64::MAX {
                level[y] = level[x] + 1;
                queue.push_back(y);
            }
        }
    }
    let mut period = 0;
    for x in 0..states {
        for &(y, p) in matrix.row(x) {
            if p > 0.0 {
                period = gcd(period, (level[x] + 1).abs_diff(level[y]));
            }
        }
    }
    Ok(period)
}

/// Stationary vector of an irreducible chain: LU solve for small chains,
/// Gauss-Seidel sweeps otherwise.
pub fn solve_stationary(matrix: &TransitionMatrix) -> Result<Vec<f64>> {
    if matrix.len() <= DENSE_SOLVE_LIMIT {
        dense_stationary(matrix)
    } else {
        gauss_seidel_stationary(matrix)
    }
}

/// Solves `pi (T - I) = 0` with one equation replaced by `sum(pi) = 1`.
pub fn dense_stationary(matrix: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = matrix.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (x, row) in matrix.rows.iter().enumerate() {
        for &(y, p) in row {
            a[(y, x)] += p;
        }
        a[(x, x)] -= 1.0;
    }
    for x in 0..n {
        a[(n - 1, x)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    a.lu()
        .solve(&b)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| ScripError::NumericalAssertion("singular stationary system".into()))
}

/// Gauss-Seidel on `pi(y) = sum_{x != y} pi(x) T_xy / (1 - T_yy)`.
pub fn gauss_seidel_stationary(matrix: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = matrix.len();
    let incoming = matrix.incoming();
    let mut pi = vec![1.0 / n as f64; n];
    let mut change = f64::INFINITY;
    for _ in 0..GAUSS_SEIDEL_SWEEPS {
        change = 0.0;
        for y in 0..n {
            let mut inflow = 0.0;
            let mut stay = 0.0;
            for &(x, p) in &incoming[y] {
                if x == y {
                    stay = p;
                } else {
                    inflow += pi[x] * p;
                }
            }
            let value = inflow / (1.0 - stay);
            change = change.max((value - pi[y]).abs());
            pi[y] = value;
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= total);
        if change <= GAUSS_SEIDEL_TOL {
            return Ok(pi);
        }
    }
    Err(ScripError::NotConverged {
        what: "Gauss-Seidel stationary solve",
        iterations: GAUSS_SEIDEL_SWEEPS,
        residual: change,
    })
}

/// `max_{x,y} |pi(x) T_xy - pi(y) T_yx|`.
pub fn detailed_balance_residual(pi: &[f64], matrix: &TransitionMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, row) in matrix.rows.iter().enumerate() {
        for &(y, p) in row {
            if y > x {
                worst = worst.max((pi[x] * p - pi[y] * matrix.get(y, x)).abs());
            }
        }
    }
    worst
}

/// Stationary law of a small chain computed two ways.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactStationary {
    pub states: Vec<Vec<u64>>,
    pub closed_form: Vec<f64>,
    pub solved: Vec<f64>,
    /// L-infinity distance between the two vectors.
    pub max_abs_difference: f64,
    /// Set when the two disagree by more than [`STATIONARY_AGREEMENT`].
    pub disagreement: bool,
    /// Detailed-balance residual of the closed form.
    pub detailed_balance_residual: f64,
    pub matrix: TransitionMatrix,
}

impl ExactStationary {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let agents = self.states.first().map_or(0, Vec::len);
        write!(out, "state_id")?;
        for a in 0..agents {
            write!(out, ",x{a}")?;
        }
        writeln!(out, ",pi_closed_form,pi_solved")?;
        for (id, state) in self.states.iter().enumerate() {
            write!(out, "{id}")?;
            for x in state {
                write!(out, ",{x}")?;
            }
            writeln!(out, ",{:.17e},{:.17e}", self.closed_form[id], self.solved[id])?;
        }
        Ok(())
    }
}

/// Enumerates the chain under thresholds `k` and returns its stationary law in
/// closed form and by solving the transition matrix.
pub fn exact_stationary(spec: &GameSpec, k: &ThresholdVector, cap: usize) -> Result<ExactStationary> {
    if spec.agents() < 3 {
        return Err(ScripError::TooFewAgents(spec.agents()));
    }
    k.validate(spec)?;
    let states = enumerate_states(spec, k, cap)?;
    let matrix = transition_matrix(spec, k, &states)?;
    let period = chain_period(&matrix)?;
    if period != 1 {
        return Err(ScripError::PeriodicChain(period));
    }
    let closed_form = closed_form_stationary(spec, &states);
    let solved = solve_stationary(&matrix)?;
    let max_abs_difference = closed_form
        .iter()
        .zip(&solved)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let detailed_balance_residual = detailed_balance_residual(&closed_form, &matrix);
    Ok(ExactStationary {
        states,
        closed_form,
        solved,
        max_abs_difference,
        disagreement: max_abs_difference > STATIONARY_AGREEMENT,
        detailed_balance_residual,
        matrix,
    })
}
