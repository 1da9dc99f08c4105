//! Greatest equilibrium by best-reply dynamics.
//!
//! The best-reply map is monotone in the threshold vector, so iterating it
//! from the top of the lattice descends to its greatest fixed point.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScripError};
use crate::mdp::{best_reply_threshold, BestReplyReport};
use crate::model::{GameSpec, ThresholdVector};

/// How often the cap is doubled when the first best reply hits it.
pub const MAX_CAP_DOUBLINGS: u32 = 6;

/// Best replies of every type; all zeros when `k` cannot absorb the money
/// supply, since then nobody can spend and money is worthless.
pub fn best_reply_vector(
    spec: &GameSpec,
    k: &ThresholdVector,
    cap: u64,
) -> Result<(ThresholdVector, Vec<BestReplyReport>)> {
    k.check_len(spec)?;
    if !spec.below_capacity(k) {
        return Ok((ThresholdVector::uniform(spec.num_types(), 0), Vec::new()));
    }
    let reports = (0..spec.num_types())
        .into_par_iter()
        .map(|t| best_reply_threshold(spec, k, t, cap))
        .collect::<Result<Vec<_>>>()?;
    let next = ThresholdVector::new(reports.iter().map(|r| r.kappa).collect());
    Ok((next, reports))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Trivial,
    Nontrivial,
    Capped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub k_star: ThresholdVector,
    /// Iterates from the all-cap start down to `k_star`.
    pub trace: Vec<ThresholdVector>,
    pub classification: Classification,
    /// Best replies at `k_star`; empty in the trivial case.
    pub reports: Vec<BestReplyReport>,
    pub cap: u64,
}

impl EquilibriumResult {
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "step")?;
        for t in 0..self.k_star.len() {
            write!(out, ",k_{t}")?;
        }
        writeln!(out)?;
        for (step, k) in self.trace.iter().enumerate() {
            write!(out, "{step}")?;
            for v in k.as_slice() {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn descend(spec: &GameSpec, cap: u64) -> Result<(EquilibriumResult, bool)> {
    let types = spec.num_types();
    let mut k = ThresholdVector::uniform(types, cap);
    let mut trace = vec![k.clone()];
    let mut first_capped = false;
    loop {
        if !spec.below_capacity(&k) {
            // Frozen economy: equivalent to everyone refusing to work.
            let zero = ThresholdVector::uniform(types, 0);
            if k != zero {
                trace.push(zero.clone());
            }
            let result = EquilibriumResult {
                k_star: zero,
                trace,
                classification: Classification::Trivial,
                reports: Vec::new(),
                cap,
            };
            return Ok((result, first_capped));
        }
        let (next, reports) = best_reply_vector(spec, &k, cap)?;
        if trace.len() == 1 {
            first_capped = reports.iter().any(|r| r.capped);
        }
        if !next.le(&k) {
            return Err(ScripError::NumericalAssertion(format!(
                "best reply {:?} rises above {:?}",
                next.as_slice(),
                k.as_slice()
            )));
        }
        if next == k {
            let classification = if reports.iter().any(|r| r.capped) {
                Classification::Capped
            } else if k.is_zero() {
                Classification::Trivial
            } else {
                Classification::Nontrivial
            };
            let result = EquilibriumResult {
                k_star: k,
                trace,
                classification,
                reports,
                cap,
            };
            return Ok((result, first_capped));
        }
        trace.push(next.clone());
        k = next;
    }
}

/// Iterates `k <- BR(k)` from `(cap, ..., cap)` to the greatest equilibrium.
///
/// `cap` defaults to the larger of the money supply and `10 ceil(m)`. If the
/// very first best reply reaches the cap the run restarts with the cap doubled.
pub fn greatest_equilibrium(spec: &GameSpec, cap: Option<u64>) -> Result<EquilibriumResult> {
    let mut cap = cap.unwrap_or_else(|| spec.default_cap()).max(1);
    let mut doublings = 0;
    loop {
        let (result, first_capped) = descend(spec, cap)?;
        if !first_capped || doublings == MAX_CAP_DOUBLINGS {
            return Ok(result);
        }
        doublings += 1;
        cap *= 2;
    }
}
