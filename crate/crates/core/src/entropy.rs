//! Steady-state wealth distributions.
//!
//! Under thresholds `k`, the long-run fraction of agents of type `t` holding
//! `i` dollars concentrates on the distribution `d*` minimizing relative entropy
//! to the geometric base distribution `q(t, i) ∝ omega_t^i`, subject to the type
//! marginals `f_t` and the mean `m`. The minimizer is an exponential tilt
//! `d*(t, i) ∝ f_t (lambda omega_t)^i`, with `lambda` fixed by the mean.
//!
//! All weights are handled in log space so that large thresholds and extreme
//! `lambda` do not overflow.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScripError};
use crate::model::{GameSpec, ThresholdVector};

/// Target accuracy of the root-find on `|g(lambda) - m|`.
pub const LAMBDA_TOLERANCE: f64 = 1e-10;

const MAX_LOG_LAMBDA: f64 = 700.0;
const MAX_BISECTIONS: usize = 4000;

/// A table of values `d(t, i)` for each type `t` and dollar level `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoneyDistribution {
    levels: Vec<Vec<f64>>,
}

impl MoneyDistribution {
    pub fn new(levels: Vec<Vec<f64>>) -> Self {
        MoneyDistribution { levels }
    }

    /// Distribution realized by integer agent counts out of `agents` total.
    pub fn from_counts(counts: &[Vec<u64>], agents: u64) -> Self {
        let scale = 1.0 / agents as f64;
        MoneyDistribution {
            levels: counts
                .iter()
                .map(|row| row.iter().map(|&c| c as f64 * scale).collect())
                .collect(),
        }
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn num_types(&self) -> usize {
        self.levels.len()
    }

    /// Highest dollar level stored for type `t`.
    pub fn top_level(&self, t: usize) -> usize {
        self.levels[t].len() - 1
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.levels[t][i]
    }

    pub fn marginal(&self, t: usize) -> f64 {
        self.levels[t].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.levels.iter().flatten().sum()
    }

    /// `sum_{t,i} i d(t, i)`.
    pub fn mean(&self) -> f64 {
        self.levels
            .iter()
            .map(|row| row.iter().enumerate().map(|(i, v)| i as f64 * v).sum::<f64>())
            .sum()
    }

    pub fn same_shape(&self, other: &MoneyDistribution) -> bool {
        self.levels.len() == other.levels.len()
            && self
                .levels
                .iter()
                .zip(&other.levels)
                .all(|(a, b)| a.len() == b.len())
    }

    fn zip_entries<'a>(
        &'a self,
        other: &'a MoneyDistribution,
    ) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
        if !self.same_shape(other) {
            return Err(ScripError::IndexMismatch);
        }
        Ok(self
            .levels
            .iter()
            .flatten()
            .copied()
            .zip(other.levels.iter().flatten().copied()))
    }

    /// `sum |d - d'|^2`, the closeness measure of the concentration result.
    pub fn squared_distance(&self, other: &MoneyDistribution) -> Result<f64> {
        Ok(self.zip_entries(other)?.map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Euclidean norm `sqrt(sum |d - d'|^2)`.
    pub fn distance(&self, other: &MoneyDistribution) -> Result<f64> {
        self.squared_distance(other).map(f64::sqrt)
    }

    pub fn l1_distance(&self, other: &MoneyDistribution) -> Result<f64> {
        Ok(self.zip_entries(other)?.map(|(a, b)| (a - b).abs()).sum())
    }

    pub fn max_abs_difference(&self, other: &MoneyDistribution) -> Result<f64> {
        Ok(self
            .zip_entries(other)?
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Checks membership in the simplex with marginals `f_t` and levels `0..=k_t`.
    pub fn check_simplex(&self, spec: &GameSpec, k: &ThresholdVector, tol: f64) -> Result<()> {
        check_shape(self, spec, k)?;
        for (t, row) in self.levels.iter().enumerate() {
            if row.iter().any(|&v| !(v >= 0.0)) {
                return Err(ScripError::NumericalAssertion(format!(
                    "type {t} has a negative or NaN entry"
                )));
            }
            let marginal: f64 = row.iter().sum();
            if (marginal - spec.fractions()[t]).abs() > tol {
                return Err(ScripError::NumericalAssertion(format!(
                    "type {t} marginal {marginal} differs from f_t = {}",
                    spec.fractions()[t]
                )));
            }
        }
        Ok(())
    }

    /// Writes `type_index,dollars,fraction` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "type_index,dollars,fraction")?;
        for (t, row) in self.levels.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                writeln!(out, "{t},{i},{v:.17e}")?;
            }
        }
        Ok(())
    }
}

fn check_shape(d: &MoneyDistribution, spec: &GameSpec, k: &ThresholdVector) -> Result<()> {
    k.check_len(spec)?;
    if d.num_types() != spec.num_types()
        || d.levels.iter().zip(k.as_slice()).any(|(row, &kt)| row.len() as u64 != kt + 1)
    {
        return Err(ScripError::IndexMismatch);
    }
    Ok(())
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalized truncated-geometric weights `r^i / sum_j r^j` for `i = 0..=k`,
/// given `ln r`.
fn tilted_weights(log_ratio: f64, k: u64) -> Vec<f64> {
    let logs = (0..=k).map(|i| i as f64 * log_ratio);
    let lse = log_sum_exp(logs.clone());
    logs.map(|l| (l - lse).exp()).collect()
}

/// Mean level of the truncated geometric on `0..=k` with ratio `exp(log_ratio)`.
fn tilted_mean(log_ratio: f64, k: u64) -> f64 {
    tilted_weights(log_ratio, k)
        .iter()
        .enumerate()
        .map(|(i, w)| i as f64 * w)
        .sum()
}

/// Base distribution `q(t, i) = omega_t^i / sum_{t, j <= k_t} omega_t^j`.
///
/// `q` sums to one over all `(t, i)` pairs but its type marginals are not `f_t`
/// in general.
pub fn base_distribution(spec: &GameSpec, k: &ThresholdVector) -> Result<MoneyDistribution> {
    k.check_len(spec)?;
    let logs: Vec<Vec<f64>> = spec
        .types()
        .iter()
        .zip(k.as_slice())
        .map(|(ty, &kt)| {
            let lw = ty.omega().ln();
            (0..=kt).map(|i| i as f64 * lw).collect()
        })
        .collect();
    let lse = log_sum_exp(logs.iter().flatten().copied());
    Ok(MoneyDistribution::new(
        logs.into_iter()
            .map(|row| row.into_iter().map(|l| (l - lse).exp()).collect())
            .collect(),
    ))
}

fn mean_money_log(spec: &GameSpec, k: &ThresholdVector, log_lambda: f64) -> f64 {
    spec.types()
        .iter()
        .zip(spec.fractions())
        .zip(k.as_slice())
        .map(|((ty, f), &kt)| f * tilted_mean(log_lambda + ty.omega().ln(), kt))
        .sum()
}

/// `g(lambda) = sum_{t,i} i f_t lambda^i q(t,i) / sum_j lambda^j q(t,j)`, the
/// mean money of the tilted distribution. Strictly increasing in `lambda`.
pub fn mean_money(spec: &GameSpec, k: &ThresholdVector, lambda: f64) -> Result<f64> {
    k.check_len(spec)?;
    if !(lambda > 0.0) {
        return Err(ScripError::InvalidSpec(format!("lambda = {lambda} must be positive")));
    }
    Ok(mean_money_log(spec, k, lambda.ln()))
}

/// Root of `g(lambda) = m` with solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSolution {
    pub lambda: f64,
    pub log_lambda: f64,
    pub achieved_mean: f64,
    pub iterations: usize,
    /// Final bracket on `lambda`.
    pub bracket: (f64, f64),
}

/// Solves `g(lambda) = m` by bisection in `ln lambda`, expanding the bracket
/// geometrically from `lambda = 1`.
pub fn solve_lambda(spec: &GameSpec, k: &ThresholdVector) -> Result<LambdaSolution> {
    k.validate(spec)?;
    let m = spec.m().as_f64();
    let g = |x: f64| mean_money_log(spec, k, x);
    let mut iterations = 0;

    let at_one = g(0.0);
    if (at_one - m).abs() <= LAMBDA_TOLERANCE {
        return Ok(LambdaSolution {
            lambda: 1.0,
            log_lambda: 0.0,
            achieved_mean: at_one,
            iterations,
            bracket: (1.0, 1.0),
        });
    }

    // Expand away from ln(lambda) = 0 with doubling steps until g brackets m.
    let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
    let mut step = 1.0;
    if at_one < m {
        loop {
            lo = hi;
            hi += step;
            step *= 2.0;
            iterations += 1;
            if g(hi) >= m {
                break;
            }
            if hi > MAX_LOG_LAMBDA {
                return Err(ScripError::NotConverged {
                    what: "lambda bracket",
                    iterations,
                    residual: m - g(hi),
                });
            }
        }
    } else {
        loop {
            hi = lo;
            lo -= step;
            step *= 2.0;
            iterations += 1;
            if g(lo) <= m {
                break;
            }
            if lo < -MAX_LOG_LAMBDA {
                return Err(ScripError::NotConverged {
                    what: "lambda bracket",
                    iterations,
                    residual: g(lo) - m,
                });
            }
        }
    }

    let mut best = if (g(lo) - m).abs() < (g(hi) - m).abs() { lo } else { hi };
    let mut best_resid = (g(best) - m).abs();
    for _ in 0..MAX_BISECTIONS {
        if best_resid <= LAMBDA_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let value = g(mid);
        let resid = (value - m).abs();
        if resid < best_resid {
            best = mid;
            best_resid = resid;
        }
        if value < m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best_resid > LAMBDA_TOLERANCE {
        return Err(ScripError::NotConverged {
            what: "lambda bisection",
            iterations,
            residual: best_resid,
        });
    }
    Ok(LambdaSolution {
        lambda: best.exp(),
        log_lambda: best,
        achieved_mean: g(best),
        iterations,
        bracket: (lo.exp(), hi.exp()),
    })
}

/// `d*(t, i) = f_t lambda^i q(t, i) / sum_j lambda^j q(t, j)` for a solved `lambda`.
pub fn tilted_distribution(
    spec: &GameSpec,
    k: &ThresholdVector,
    solution: &LambdaSolution,
) -> MoneyDistribution {
    MoneyDistribution::new(
        spec.types()
            .iter()
            .zip(spec.fractions())
            .zip(k.as_slice())
            .map(|((ty, f), &kt)| {
                tilted_weights(solution.log_lambda + ty.omega().ln(), kt)
                    .into_iter()
                    .map(|w| f * w)
                    .collect()
            })
            .collect(),
    )
}

/// The distribution in the simplex minimizing relative entropy to the base
/// distribution.
pub fn min_relent_distribution(spec: &GameSpec, k: &ThresholdVector) -> Result<MoneyDistribution> {
    let solution = solve_lambda(spec, k)?;
    Ok(tilted_distribution(spec, k, &solution))
}

/// `H(d || q) = sum_{q != 0} d log(d / q)` with `0 log 0 = 0`; infinite when
/// `d` has mass where `q` has none.
pub fn relative_entropy(d: &MoneyDistribution, q: &MoneyDistribution) -> Result<f64> {
    let mut total = 0.0;
    for (dv, qv) in d.zip_entries(q)? {
        if qv == 0.0 {
            if dv > 0.0 {
                return Ok(f64::INFINITY);
            }
        } else if dv > 0.0 {
            total += dv * (dv / qv).ln();
        }
    }
    Ok(total)
}

/// Shannon entropy `-sum d log d` over all entries.
pub fn entropy(d: &MoneyDistribution) -> f64 {
    -d.levels
        .iter()
        .flatten()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

fn fraction_entropy(spec: &GameSpec) -> f64 {
    -spec.fractions().iter().map(|f| f * f.ln()).sum::<f64>()
}

fn omega_term(d: &MoneyDistribution, spec: &GameSpec) -> f64 {
    d.levels
        .iter()
        .zip(spec.types())
        .map(|(row, ty)| {
            let lw = ty.omega().ln();
            row.iter().enumerate().map(|(i, v)| i as f64 * v * lw).sum::<f64>()
        })
        .sum()
}

/// Log-probability rate `V(d) = H(d) - H(f) - log Z + sum i d(t,i) log omega_t`
/// of observing distribution `d`, per agent.
///
/// `log Z` is the per-agent log partition function, the value of the other
/// terms at `d*`, so `V(d*) = 0` and `V < 0` elsewhere on the simplex.
pub fn potential_v(d: &MoneyDistribution, spec: &GameSpec, k: &ThresholdVector) -> Result<f64> {
    check_shape(d, spec, k)?;
    let star = min_relent_distribution(spec, k)?;
    let h_f = fraction_entropy(spec);
    let log_z = entropy(&star) - h_f + omega_term(&star, spec);
    Ok(entropy(d) - h_f - log_z + omega_term(d, spec))
}

/// Bound on the L1 distance between `d` and its nearest realizable distribution:
/// `(sum_t (k_t + 1)) (2c + 2) / (h n)` with `c = max_t max(k_t - m, m)`.
pub fn realizable_l1_bound(spec: &GameSpec, k: &ThresholdVector) -> f64 {
    let m = spec.m().as_f64();
    let cells: f64 = k.as_slice().iter().map(|&kt| kt as f64 + 1.0).sum();
    let c = k
        .as_slice()
        .iter()
        .map(|&kt| (kt as f64 - m).max(m))
        .fold(0.0, f64::max);
    cells * (2.0 * c + 2.0) / spec.agents() as f64
}

/// Integer agent counts `c(t, i)` closest to `d * h n` with exact type counts
/// `f_t h n` and exact total money `m h n`.
///
/// Entries are rounded to the nearest integer (ties down). Type counts are then
/// repaired one agent at a time on the entries with the largest residual, and
/// the money total is repaired by moving single agents one level up or down,
/// choosing the move that best reduces the residuals. Ties go to the lowest
/// `(t, i)`.
pub fn nearest_realizable_counts(d: &MoneyDistribution, spec: &GameSpec) -> Result<Vec<Vec<u64>>> {
    if d.num_types() != spec.num_types() {
        return Err(ScripError::IndexMismatch);
    }
    let agents = spec.agents() as f64;
    let targets: Vec<Vec<f64>> = d
        .levels
        .iter()
        .map(|row| row.iter().map(|v| v * agents).collect())
        .collect();
    let mut counts: Vec<Vec<i64>> = targets
        .iter()
        .map(|row| row.iter().map(|&x| (x - 0.5).ceil().max(0.0) as i64).collect())
        .collect();
    // residual = target - count
    let residual = |counts: &Vec<Vec<i64>>, t: usize, i: usize| targets[t][i] - counts[t][i] as f64;

    for t in 0..spec.num_types() {
        let want = spec.type_agents(t) as i64;
        loop {
            let have: i64 = counts[t].iter().sum();
            if have == want {
                break;
            }
            let levels = 0..counts[t].len();
            if have < want {
                let i = levels
                    .max_by(|&a, &b| {
                        residual(&counts, t, a)
                            .total_cmp(&residual(&counts, t, b))
                            .then(b.cmp(&a))
                    })
                    .expect("non-empty row");
                counts[t][i] += 1;
            } else {
                let i = levels
                    .filter(|&i| counts[t][i] > 0)
                    .min_by(|&a, &b| {
                        residual(&counts, t, a)
                            .total_cmp(&residual(&counts, t, b))
                            .then(a.cmp(&b))
                    })
                    .expect("positive count exists");
                counts[t][i] -= 1;
            }
        }
    }

    let money_target = spec.total_money() as i64;
    loop {
        let money: i64 = counts
            .iter()
            .map(|row| row.iter().enumerate().map(|(i, c)| i as i64 * c).sum::<i64>())
            .sum();
        if money == money_target {
            break;
        }
        let up = money < money_target;
        // Moving one agent from level i to i + s (s = +1 or -1) changes the
        // total residual mismatch by (r_src - r_dst) favourably when the source
        // is over-filled and the destination under-filled.
        let mut best: Option<(f64, usize, usize)> = None;
        for (t, row) in counts.iter().enumerate() {
            for i in 0..row.len() {
                if row[i] == 0 || (up && i + 1 >= row.len()) || (!up && i == 0) {
                    continue;
                }
                let j = if up { i + 1 } else { i - 1 };
                let score = residual(&counts, t, j) - residual(&counts, t, i);
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, t, i));
                }
            }
        }
        let (_, t, i) = best.ok_or_else(|| {
            ScripError::NumericalAssertion("no level move can repair the money total".into())
        })?;
        let j = if up { i + 1 } else { i - 1 };
        counts[t][i] -= 1;
        counts[t][j] += 1;
    }

    Ok(counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as u64).collect())
        .collect())
}

/// Nearest distribution realizable by `h n` agents; entries are multiples of
/// `1 / (h n)`.
pub fn nearest_realizable(d: &MoneyDistribution, spec: &GameSpec) -> Result<MoneyDistribution> {
    let counts = nearest_realizable_counts(d, spec)?;
    Ok(MoneyDistribution::from_counts(&counts, spec.agents()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_game_spec, Money, RawAgentType};

    fn single(omega: f64, m: Money, h: u64, n: u64) -> GameSpec {
        build_game_spec(
            vec![RawAgentType {
                alpha: 0.1,
                beta: 1.0,
                gamma: 1.0,
                delta: 0.95,
                rho: 1.0,
                chi: omega,
            }],
            vec![1.0],
            h,
            m,
            n,
        )
        .unwrap()
        .spec
    }

    fn k1(k: u64) -> ThresholdVector {
        ThresholdVector::new(vec![k])
    }

    #[test]
    fn base_distribution_examples() {
        let spec = single(1.0, Money::integer(2).unwrap(), 1, 10);
        let q = base_distribution(&spec, &k1(5)).unwrap();
        for &v in &q.levels()[0] {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
        let spec = single(2.0, Money::new(1, 2).unwrap(), 2, 5);
        let q = base_distribution(&spec, &k1(1)).unwrap();
        assert!((q.get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((q.get(0, 1) - 2.0 / 3.0).abs() < 1e-15);

        let t = RawAgentType {
            alpha: 0.1,
            beta: 0.5,
            gamma: 1.0,
            delta: 0.9,
            rho: 1.0,
            chi: 2.0,
        };
        let spec = build_game_spec(vec![t, t], vec![0.5, 0.5], 2, Money::new(1, 2).unwrap(), 1)
            .unwrap()
            .spec;
        let q = base_distribution(&spec, &ThresholdVector::new(vec![1, 1])).unwrap();
        for v in q.levels().iter().flatten() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_money_examples() {
        let spec = single(1.0, Money::integer(2).unwrap(), 1, 10);
        assert!((mean_money(&spec, &k1(5), 1.0).unwrap() - 2.5).abs() < 1e-14);
        assert!((mean_money(&spec, &k1(1), 3.0).unwrap() - 0.75).abs() < 1e-15);
        assert!(mean_money(&spec, &k1(5), 1e-30).unwrap() < 1e-29);
        assert!((mean_money(&spec, &k1(5), 1e30).unwrap() - 5.0).abs() < 1e-25);
        assert!((mean_money(&spec, &k1(400), 1e300).unwrap() - 400.0).abs() < 1e-9);
        assert!(mean_money(&spec, &k1(5), 0.0).is_err());
    }

    #[test]
    fn lambda_uniform_case_is_one() {
        let spec = single(1.0, Money::new(5, 2).unwrap(), 2, 1);
        let sol = solve_lambda(&spec, &k1(5)).unwrap();
        assert_eq!(sol.lambda, 1.0);
        let d = min_relent_distribution(&spec, &k1(5)).unwrap();
        for &v in &d.levels()[0] {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn lambda_matches_grid_scan() {
        let spec = single(1.0, Money::integer(2).unwrap(), 1, 10);
        let sol = solve_lambda(&spec, &k1(5)).unwrap();
        assert!(sol.lambda > 0.0 && sol.lambda < 1.0);
        assert!((sol.achieved_mean - 2.0).abs() <= LAMBDA_TOLERANCE);

        // Independent oracle: direct power sums on a dense grid, no log space.
        let g = |l: f64| {
            let w: Vec<f64> = (0..=5).map(|i| l.powi(i)).collect();
            w.iter().enumerate().map(|(i, x)| i as f64 * x).sum::<f64>() / w.iter().sum::<f64>()
        };
        let step = 1e-6;
        let mut crossing = None;
        let mut l = step;
        while l < 1.0 {
            if g(l) < 2.0 && g(l + step) >= 2.0 {
                crossing = Some(l);
                break;
            }
            l += step;
        }
        let crossing = crossing.expect("grid crosses m");
        assert!(sol.lambda >= crossing - 1e-12 && sol.lambda <= crossing + step + 1e-12);
    }

    #[test]
    fn capacity_error() {
        let spec = single(1.0, Money::integer(5).unwrap(), 1, 10);
        assert!(matches!(
            solve_lambda(&spec, &k1(5)),
            Err(ScripError::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn dstar_geometric_profile() {
        let spec = single(1.0, Money::integer(2).unwrap(), 1, 10);
        let sol = solve_lambda(&spec, &k1(5)).unwrap();
        let d = tilted_distribution(&spec, &k1(5), &sol);
        for i in 0..5 {
            assert!(d.get(0, i + 1) < d.get(0, i));
            assert!((d.get(0, i + 1) / d.get(0, i) - sol.lambda).abs() < 1e-12);
        }
        assert!((d.marginal(0) - 1.0).abs() < 1e-12);
        assert!((d.mean() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn relative_entropy_examples() {
        let d = MoneyDistribution::new(vec![vec![0.2, 0.3], vec![0.5]]);
        assert_eq!(relative_entropy(&d, &d).unwrap(), 0.0);
        let a = MoneyDistribution::new(vec![vec![1.0, 0.0]]);
        let b = MoneyDistribution::new(vec![vec![0.5, 0.5]]);
        assert!((relative_entropy(&a, &b).unwrap() - 2f64.ln()).abs() < 1e-15);
        let c = MoneyDistribution::new(vec![vec![1.0, 0.0]]);
        assert_eq!(relative_entropy(&b, &c).unwrap(), f64::INFINITY);
        let e = MoneyDistribution::new(vec![vec![1.0]]);
        assert_eq!(relative_entropy(&a, &e), Err(ScripError::IndexMismatch));
    }

    #[test]
    fn potential_differences_reduce_to_entropy_for_unit_omega() {
        let spec = single(1.0, Money::integer(1).unwrap(), 1, 10);
        let k = k1(2);
        let star = min_relent_distribution(&spec, &k).unwrap();
        assert!(potential_v(&star, &spec, &k).unwrap().abs() < 1e-12);
        // Points on the simplex with mean 1: (a, 1 - 2a, a)
        let at = |a: f64| MoneyDistribution::new(vec![vec![a, 1.0 - 2.0 * a, a]]);
        for (a, b) in [(0.1, 0.3), (0.05, 0.45), (0.2, 0.25)] {
            let (da, db) = (at(a), at(b));
            let dv = potential_v(&da, &spec, &k).unwrap() - potential_v(&db, &spec, &k).unwrap();
            assert!((dv - (entropy(&da) - entropy(&db))).abs() < 1e-12);
            assert!(potential_v(&da, &spec, &k).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn realizable_input_is_fixed_point() {
        let spec = single(1.0, Money::integer(2).unwrap(), 1, 10);
        let d = MoneyDistribution::new(vec![vec![0.3, 0.1, 0.2, 0.2, 0.1, 0.1]]);
        assert!((d.mean() - 2.0).abs() < 1e-12);
        let r = nearest_realizable(&d, &spec).unwrap();
        assert!(r.max_abs_difference(&d).unwrap() < 1e-15);
    }

    #[test]
    fn realizable_rounding_of_dstar() {
        let spec = single(1.0, Money::integer(2).unwrap(), 1, 1000);
        let k = k1(5);
        let star = min_relent_distribution(&spec, &k).unwrap();
        let counts = nearest_realizable_counts(&star, &spec).unwrap();
        assert_eq!(counts[0].iter().sum::<u64>(), 1000);
        let money: u64 = counts[0].iter().enumerate().map(|(i, c)| i as u64 * c).sum();
        assert_eq!(money, 2000);
        let r = MoneyDistribution::from_counts(&counts, 1000);
        for &v in &r.levels()[0] {
            assert!((v * 1000.0 - (v * 1000.0).round()).abs() < 1e-9);
        }
        assert!(r.l1_distance(&star).unwrap() <= realizable_l1_bound(&spec, &k));
    }

    #[test]
    fn realizable_distance_shrinks_with_n() {
        let k = k1(5);
        let mut prev = f64::INFINITY;
        for n in [100u64, 1000, 10_000] {
            let spec = single(1.3, Money::new(7, 3).unwrap(), 3, n);
            let star = min_relent_distribution(&spec, &k).unwrap();
            let r = nearest_realizable(&star, &spec).unwrap();
            let l1 = r.l1_distance(&star).unwrap();
            assert!(l1 <= realizable_l1_bound(&spec, &k));
            assert!(l1 < prev);
            prev = l1;
        }
    }

    #[test]
    fn csv_export() {
        let d = MoneyDistribution::new(vec![vec![0.5, 0.5]]);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("type_index,dollars,fraction\n0,0,"));
        assert_eq!(text.lines().count(), 3);
    }
}
