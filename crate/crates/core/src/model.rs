//! Agent types, game specifications and threshold vectors.
//!
//! A [`GameSpec`] is the validated form of the tuple (types, fractions, h, m, n):
//! `h` base agents with type fractions `f_t`, average money `m` per agent, and
//! `n` replicas of the base population. Agents `0..h` are laid out type by type
//! and agent `j` has the type of base agent `j mod h`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScripError};

const INTEGRALITY_TOL: f64 = 1e-9;

/// Parameters of one agent class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAgentType", into = "RawAgentType")]
pub struct AgentType {
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    rho: f64,
    chi: f64,
}

/// Unvalidated agent-type parameters as they appear in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawAgentType {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub rho: f64,
    pub chi: f64,
}

impl AgentType {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64, rho: f64, chi: f64) -> Result<Self> {
        Self::validated(
            0,
            RawAgentType {
                alpha,
                beta,
                gamma,
                delta,
                rho,
                chi,
            },
        )
    }

    fn validated(type_index: usize, raw: RawAgentType) -> Result<Self> {
        let bound = |field: &'static str, value: f64, ok: bool, bound: &'static str| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ScripError::AgentTypeBound {
                    type_index,
                    field,
                    value,
                    bound,
                })
            }
        };
        bound("alpha", raw.alpha, raw.alpha > 0.0, "alpha > 0")?;
        bound("beta", raw.beta, raw.beta > 0.0 && raw.beta <= 1.0, "0 < beta <= 1")?;
        bound("gamma", raw.gamma, raw.gamma > raw.alpha, "gamma > alpha")?;
        bound("delta", raw.delta, raw.delta > 0.0 && raw.delta < 1.0, "0 < delta < 1")?;
        bound("rho", raw.rho, raw.rho > 0.0, "rho > 0")?;
        bound("chi", raw.chi, raw.chi > 0.0, "chi > 0")?;
        Ok(AgentType {
            alpha: raw.alpha,
            beta: raw.beta,
            gamma: raw.gamma,
            delta: raw.delta,
            rho: raw.rho,
            chi: raw.chi,
        })
    }

    /// Cost of satisfying a request, in utils.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Probability of being able to satisfy a request.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Utility of having a request satisfied.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Relative request rate.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Relative weight when chosen among volunteers.
    pub fn chi(&self) -> f64 {
        self.chi
    }

    /// `beta * chi / rho`; determines how much money agents of this type hold.
    pub fn omega(&self) -> f64 {
        self.beta * self.chi / self.rho
    }

    fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }
}

impl TryFrom<RawAgentType> for AgentType {
    type Error = ScripError;

    fn try_from(raw: RawAgentType) -> Result<Self> {
        AgentType::validated(0, raw)
    }
}

impl From<AgentType> for RawAgentType {
    fn from(t: AgentType) -> Self {
        RawAgentType {
            alpha: t.alpha,
            beta: t.beta,
            gamma: t.gamma,
            delta: t.delta,
            rho: t.rho,
            chi: t.chi,
        }
    }
}

/// Average money per agent as an exact positive rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMoney", into = "RawMoney")]
pub struct Money {
    num: u64,
    den: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMoney {
    num: u64,
    den: u64,
}

impl Money {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(ScripError::InvalidSpec("m has a zero denominator".into()));
        }
        if num == 0 {
            return Err(ScripError::InvalidSpec("m must be positive".into()));
        }
        let g = gcd(num, den);
        Ok(Money {
            num: num / g,
            den: den / g,
        })
    }

    pub fn integer(m: u64) -> Result<Self> {
        Money::new(m, 1)
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Smallest integer not below `m`.
    pub fn ceil(&self) -> u64 {
        self.num.div_ceil(self.den)
    }
}

impl TryFrom<RawMoney> for Money {
    type Error = ScripError;

    fn try_from(raw: RawMoney) -> Result<Self> {
        Money::new(raw.num, raw.den)
    }
}

impl From<Money> for RawMoney {
    fn from(m: Money) -> Self {
        RawMoney {
            num: m.num,
            den: m.den,
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// A validated economy: types, fractions, base count `h`, money `m`, replicas `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGameSpec", into = "RawGameSpec")]
pub struct GameSpec {
    types: Vec<AgentType>,
    fractions: Vec<f64>,
    h: u64,
    m: Money,
    n: u64,
    base_counts: Vec<u64>,
}

/// Serialized shape of a [`GameSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawGameSpec {
    pub types: Vec<RawAgentType>,
    pub fractions: Vec<f64>,
    pub h: u64,
    pub m: Money,
    pub n: u64,
}

/// Result of [`build_game_spec`]: the spec plus the factor applied to every
/// `rho` so that `sum_t rho_t f_t = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltGameSpec {
    pub spec: GameSpec,
    pub rho_scale: f64,
}

/// Validates raw inputs into a [`GameSpec`], rescaling request rates if needed.
pub fn build_game_spec(
    types: Vec<RawAgentType>,
    fractions: Vec<f64>,
    h: u64,
    m: Money,
    n: u64,
) -> Result<BuiltGameSpec> {
    if types.is_empty() {
        return Err(ScripError::InvalidSpec("at least one agent type is required".into()));
    }
    if types.len() != fractions.len() {
        return Err(ScripError::InvalidSpec(format!(
            "{} types but {} fractions",
            types.len(),
            fractions.len()
        )));
    }
    if h == 0 {
        return Err(ScripError::InvalidSpec("h must be positive".into()));
    }
    if n == 0 {
        return Err(ScripError::InvalidSpec("n must be positive".into()));
    }
    let types = types
        .into_iter()
        .enumerate()
        .map(|(i, raw)| AgentType::validated(i, raw))
        .collect::<Result<Vec<_>>>()?;

    for (i, &f) in fractions.iter().enumerate() {
        if !(f.is_finite() && f > 0.0 && f <= 1.0) {
            return Err(ScripError::InvalidSpec(format!(
                "fraction {i} = {f} is outside (0, 1]"
            )));
        }
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > INTEGRALITY_TOL {
        return Err(ScripError::FractionsNotNormalized(total));
    }
    let mut base_counts = Vec::with_capacity(fractions.len());
    for (i, &f) in fractions.iter().enumerate() {
        let value = f * h as f64;
        let rounded = value.round();
        if (value - rounded).abs() > INTEGRALITY_TOL * h as f64 {
            return Err(ScripError::NonIntegralTypeCount {
                type_index: i,
                value,
            });
        }
        base_counts.push(rounded as u64);
    }
    if base_counts.iter().sum::<u64>() != h {
        return Err(ScripError::InvalidSpec(format!(
            "type counts {base_counts:?} do not add up to h = {h}"
        )));
    }
    if !(m.num() as u128 * h as u128).is_multiple_of(m.den() as u128) {
        return Err(ScripError::NonIntegralMoney {
            num: m.num(),
            den: m.den(),
            h,
        });
    }

    let rate: f64 = types.iter().zip(&fractions).map(|(t, f)| t.rho * f).sum();
    let rho_scale = if (rate - 1.0).abs() <= 1e-12 { 1.0 } else { 1.0 / rate };
    let types = if rho_scale == 1.0 {
        types
    } else {
        types
            .into_iter()
            .map(|t| t.with_rho(t.rho * rho_scale))
            .collect()
    };

    Ok(BuiltGameSpec {
        spec: GameSpec {
            types,
            fractions,
            h,
            m,
            n,
            base_counts,
        },
        rho_scale,
    })
}

impl TryFrom<RawGameSpec> for GameSpec {
    type Error = ScripError;

    fn try_from(raw: RawGameSpec) -> Result<Self> {
        build_game_spec(raw.types, raw.fractions, raw.h, raw.m, raw.n).map(|b| b.spec)
    }
}

impl From<GameSpec> for RawGameSpec {
    fn from(spec: GameSpec) -> Self {
        RawGameSpec {
            types: spec.types.into_iter().map(Into::into).collect(),
            fractions: spec.fractions,
            h: spec.h,
            m: spec.m,
            n: spec.n,
        }
    }
}

impl GameSpec {
    /// Parses and validates a JSON document with keys `types`, `fractions`,
    /// `h`, `m: {num, den}` and `n`.
    pub fn from_json(text: &str) -> Result<BuiltGameSpec> {
        let raw: RawGameSpec =
            serde_json::from_str(text).map_err(|e| ScripError::InvalidSpec(e.to_string()))?;
        build_game_spec(raw.types, raw.fractions, raw.h, raw.m, raw.n)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("GameSpec serializes")
    }

    pub fn types(&self) -> &[AgentType] {
        &self.types
    }

    pub fn agent_type(&self, t: usize) -> &AgentType {
        &self.types[t]
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn h(&self) -> u64 {
        self.h
    }

    pub fn m(&self) -> Money {
        self.m
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Total number of agents, `h * n`.
    pub fn agents(&self) -> u64 {
        self.h * self.n
    }

    /// Total money in the system, `m * h * n`.
    pub fn total_money(&self) -> u64 {
        (self.m.num() as u128 * self.h as u128 * self.n as u128 / self.m.den() as u128) as u64
    }

    /// Number of base agents of type `t`, `f_t * h`.
    pub fn base_count(&self, t: usize) -> u64 {
        self.base_counts[t]
    }

    /// Number of agents of type `t` across all replicas.
    pub fn type_agents(&self, t: usize) -> u64 {
        self.base_counts[t] * self.n
    }

    /// Type index of every base agent, in layout order.
    pub fn base_layout(&self) -> Vec<usize> {
        self.base_counts
            .iter()
            .enumerate()
            .flat_map(|(t, &c)| std::iter::repeat_n(t, c as usize))
            .collect()
    }

    pub fn type_of_agent(&self, agent: u64) -> usize {
        let mut base = agent % self.h;
        for (t, &c) in self.base_counts.iter().enumerate() {
            if base < c {
                return t;
            }
            base -= c;
        }
        unreachable!("base counts sum to h")
    }

    /// Same economy with a different replica count.
    pub fn with_replicas(&self, n: u64) -> Result<GameSpec> {
        if n == 0 {
            return Err(ScripError::InvalidSpec("n must be positive".into()));
        }
        Ok(GameSpec { n, ..self.clone() })
    }

    /// Same economy with a different money supply.
    pub fn with_money(&self, m: Money) -> Result<GameSpec> {
        build_game_spec(
            self.types.iter().copied().map(Into::into).collect(),
            self.fractions.clone(),
            self.h,
            m,
            self.n,
        )
        .map(|b| b.spec)
    }

    /// Same economy with agent types replaced (fractions unchanged).
    pub fn with_types(&self, types: Vec<RawAgentType>) -> Result<GameSpec> {
        build_game_spec(types, self.fractions.clone(), self.h, self.m, self.n).map(|b| b.spec)
    }

    /// `sum_t f_t k_t`, the most money the thresholds can absorb per agent.
    pub fn capacity(&self, k: &ThresholdVector) -> f64 {
        self.fractions
            .iter()
            .zip(k.as_slice())
            .map(|(f, &kt)| f * kt as f64)
            .sum()
    }

    /// Exact test of `m < sum_t f_t k_t`.
    pub fn below_capacity(&self, k: &ThresholdVector) -> bool {
        let absorbed: u128 = self
            .base_counts
            .iter()
            .zip(k.as_slice())
            .map(|(&c, &kt)| c as u128 * kt as u128)
            .sum();
        // m < absorbed / h  <=>  num * h < den * absorbed
        (self.m.num() as u128) * (self.h as u128) < (self.m.den() as u128) * absorbed
    }

    /// Default cap standing in for an infinite threshold.
    pub fn default_cap(&self) -> u64 {
        self.total_money().max(10 * self.m.ceil())
    }
}

/// Per-type threshold `k_t`: agents of type `t` volunteer while holding fewer
/// than `k_t` dollars.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdVector(Vec<u64>);

impl ThresholdVector {
    pub fn new(k: Vec<u64>) -> Self {
        ThresholdVector(k)
    }

    pub fn uniform(types: usize, k: u64) -> Self {
        ThresholdVector(vec![k; types])
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn get(&self, t: usize) -> u64 {
        self.0[t]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &ThresholdVector) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn check_len(&self, spec: &GameSpec) -> Result<()> {
        if self.0.len() != spec.num_types() {
            return Err(ScripError::ThresholdLength {
                expected: spec.num_types(),
                got: self.0.len(),
            });
        }
        Ok(())
    }

    /// Checks the length and the strict money constraint `m < sum_t f_t k_t`.
    pub fn validate(&self, spec: &GameSpec) -> Result<()> {
        self.check_len(spec)?;
        if !spec.below_capacity(self) {
            return Err(ScripError::CapacityExceeded {
                money: spec.m().as_f64(),
                capacity: spec.capacity(self),
            });
        }
        Ok(())
    }
}

impl From<Vec<u64>> for ThresholdVector {
    fn from(k: Vec<u64>) -> Self {
        ThresholdVector(k)
    }
}

/// Per-round discount `1 - (1 - delta) / n`.
pub fn per_round_discount(delta: f64, n: u64) -> f64 {
    debug_assert!(delta > 0.0 && delta < 1.0 && n >= 1);
    1.0 - (1.0 - delta) / n as f64
}
