use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scrip_core::chain::{exact_stationary, initial_state, transition_matrix, enumerate_states, Simulator};
use scrip_core::entropy::{
    base_distribution, mean_money, min_relent_distribution, potential_v, relative_entropy,
    solve_lambda, MoneyDistribution,
};
use scrip_core::equilibrium::{best_reply_vector, greatest_equilibrium, Classification};
use scrip_core::mdp::{choice_probabilities, discounted_ruin_factor, IDENTITY_TOLERANCE};
use scrip_core::ScripError;
use scrip_core::model::{build_game_spec, per_round_discount, GameSpec, Money, RawAgentType, ThresholdVector};

fn agent_type() -> impl Strategy<Value = RawAgentType> {
    (0.5f64..2.0, 0.05f64..0.9, 0.2f64..=1.0, 0.5f64..0.995, 0.3f64..3.0, 0.3f64..3.0).prop_map(
        |(gamma, ratio, beta, delta, rho, chi)| RawAgentType {
            alpha: gamma * ratio,
            beta,
            gamma,
            delta,
            rho,
            chi,
        },
    )
}

#[derive(Debug, Clone)]
struct Instance {
    spec: GameSpec,
    k: ThresholdVector,
}

/// Valid economy with thresholds below capacity; `max_n` bounds the replicas.
fn instance(max_types: usize, max_count: u64, max_k: u64, max_n: u64) -> impl Strategy<Value = Instance> {
    (1..=max_types)
        .prop_flat_map(move |types| {
            (
                prop::collection::vec(agent_type(), types),
                prop::collection::vec(1..=max_count, types),
                prop::collection::vec(1..=max_k, types),
                1..=max_n,
                any::<prop::sample::Index>(),
            )
        })
        .prop_filter_map("needs room for money", |(raw, counts, k, n, money)| {
            let h: u64 = counts.iter().sum();
            let absorbed: u64 = counts.iter().zip(&k).map(|(c, k)| c * k).sum();
            if absorbed < 2 {
                return None;
            }
            let mh = 1 + money.index((absorbed - 1) as usize) as u64;
            let fractions = counts.iter().map(|&c| c as f64 / h as f64).collect();
            let spec = build_game_spec(raw, fractions, h, Money::new(mh, h).ok()?, n).ok()?.spec;
            Some(Instance { spec, k: ThresholdVector::new(k) })
        })
}

/// Instances with at least 100 replicas, where per-round probabilities are small.
fn populous(s: impl Strategy<Value = Instance>) -> impl Strategy<Value = Instance> {
    s.prop_map(|inst| {
        let spec = inst.spec.with_replicas(inst.spec.n().max(100)).unwrap();
        Instance { spec, k: inst.k }
    })
}

/// Best replies, rejecting the case when `p_u + p_d > 1`: the single-agent walk
/// does not exist there.
fn walkable(
    r: scrip_core::Result<(ThresholdVector, Vec<scrip_core::BestReplyReport>)>,
) -> Result<ThresholdVector, TestCaseError> {
    match r {
        Ok((k, _)) => Ok(k),
        Err(ScripError::InvalidProbabilities { .. }) => Err(TestCaseError::reject("no valid walk")),
        Err(e) => Err(TestCaseError::fail(e.to_string())),
    }
}

/// Instance whose types share one `chi`, so the product-form law is exact.
fn common_chi_instance() -> impl Strategy<Value = Instance> {
    (instance(2, 2, 3, 1), 0.3f64..3.0)
        .prop_filter_map("at least three agents", |(inst, chi)| {
            if inst.spec.agents() < 3 {
                return None;
            }
            let raw = inst
                .spec
                .types()
                .iter()
                .map(|t| RawAgentType { chi, ..RawAgentType::from(*t) })
                .collect();
            let spec = inst.spec.with_types(raw).ok()?;
            Some(Instance { spec, k: inst.k })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spec_json_round_trip(inst in instance(3, 3, 6, 100)) {
        let text = inst.spec.to_json();
        let back = GameSpec::from_json(&text).unwrap();
        prop_assert_eq!(&back.spec, &inst.spec);
        prop_assert_eq!(back.rho_scale, 1.0);
    }

    #[test]
    fn discount_rises_with_n(delta in 0.01f64..0.999, n in 1u64..100_000) {
        let a = per_round_discount(delta, n);
        let b = per_round_discount(delta, n + 1);
        prop_assert!(a < b && b < 1.0);
        // a requester served every time it asks: utility independent of n
        let value = |n: u64| (1.0 / n as f64) / (1.0 - per_round_discount(delta, n));
        prop_assert!((value(n) - value(3 * n)).abs() <= 1e-9 * value(n));
    }

    #[test]
    fn mean_money_strictly_increasing(inst in instance(3, 3, 6, 10), a in -4.0f64..4.0, gap in 0.01f64..2.0) {
        let lo = mean_money(&inst.spec, &inst.k, a.exp()).unwrap();
        let hi = mean_money(&inst.spec, &inst.k, (a + gap).exp()).unwrap();
        prop_assert!(lo < hi);
    }

    #[test]
    fn dstar_satisfies_constraints(inst in instance(3, 3, 8, 50)) {
        let sol = solve_lambda(&inst.spec, &inst.k).unwrap();
        let d = min_relent_distribution(&inst.spec, &inst.k).unwrap();
        prop_assert!((d.mean() - inst.spec.m().as_f64()).abs() <= 1e-9);
        for (t, f) in inst.spec.fractions().iter().enumerate() {
            prop_assert!((d.marginal(t) - f).abs() <= 1e-12);
            let ratio = sol.lambda * inst.spec.agent_type(t).omega();
            for i in 0..d.top_level(t) {
                if d.get(t, i) > 1e-250 {
                    let r = d.get(t, i + 1) / d.get(t, i);
                    prop_assert!((r - ratio).abs() <= 1e-9 * ratio.max(1.0), "{} vs {}", r, ratio);
                }
            }
        }
    }

    #[test]
    fn lambda_monotone_in_money_and_thresholds(inst in instance(3, 2, 6, 5), bump in 0usize..3) {
        let spec = &inst.spec;
        let h = spec.h();
        let m = spec.m();
        let lambda = solve_lambda(spec, &inst.k).unwrap().lambda;
        let mh = m.num() * h / m.den();
        if let Ok(richer) = spec.with_money(Money::new(mh + 1, h).unwrap()) {
            if richer.below_capacity(&inst.k) {
                prop_assert!(solve_lambda(&richer, &inst.k).unwrap().lambda >= lambda);
            }
        }
        let mut bigger = inst.k.as_slice().to_vec();
        let t = bump % bigger.len();
        bigger[t] += 1;
        let bigger = ThresholdVector::new(bigger);
        prop_assert!(solve_lambda(spec, &bigger).unwrap().lambda <= lambda * (1.0 + 1e-12));
    }

    #[test]
    fn potential_peaks_at_dstar(inst in instance(2, 2, 4, 20), weights in prop::collection::vec(0.0f64..1.0, 16)) {
        // mix d* with another feasible point: V falls off along the segment
        let spec = &inst.spec;
        let star = min_relent_distribution(spec, &inst.k).unwrap();
        prop_assert!(potential_v(&star, spec, &inst.k).unwrap().abs() <= 1e-9);
        let q = base_distribution(spec, &inst.k).unwrap();
        let h_star = relative_entropy(&star, &q).unwrap();
        let other = perturb(&star, &weights);
        if let Some(other) = other {
            for s in [0.25, 0.5, 1.0] {
                let mixed = mix(&star, &other, s);
                let v = potential_v(&mixed, spec, &inst.k).unwrap();
                prop_assert!(v <= 1e-9);
                prop_assert!(relative_entropy(&mixed, &q).unwrap() >= h_star - 1e-9);
            }
        }
    }

    #[test]
    fn ruin_factor_shape(kappa in 1u64..30, p_d in 0.01f64..0.5, frac in 0.0f64..0.95, z in 0.5f64..0.9999) {
        let p_u = frac * (1.0 - p_d);
        let phi = |kappa, p_u, z| discounted_ruin_factor(kappa, p_u, p_d, z).unwrap();
        let v = phi(kappa, p_u, z);
        prop_assert!(v > 0.0 && v < 1.0);
        prop_assert!(phi(kappa + 1, p_u, z) < v);
        if p_u > 1e-3 {
            prop_assert!(phi(kappa, p_u * 0.9, z) >= v);
        }
        prop_assert!(phi(kappa, p_u, (z + 1.0) / 2.0) > v);
        prop_assert_eq!(discounted_ruin_factor(0, p_u, p_d, z).unwrap(), 1.0);
    }

    #[test]
    fn choice_probability_identity(inst in instance(3, 3, 8, 10_000)) {
        for t in 0..inst.spec.num_types() {
            let p = choice_probabilities(&inst.spec, &inst.k, t).unwrap();
            prop_assert!((p.p_u - p.p_u_identity).abs() <= IDENTITY_TOLERANCE);
            prop_assert!(p.p_u >= 0.0 && p.p_d > 0.0 && p.p_u + p.p_d <= 1.0);
        }
    }

    #[test]
    fn best_replies_ignore_n(inst in populous(instance(3, 2, 6, 2000)), factor in 2u64..5) {
        let scaled = inst.spec.with_replicas(inst.spec.n() * factor).unwrap();
        let a = walkable(best_reply_vector(&inst.spec, &inst.k, 200))?;
        let b = best_reply_vector(&scaled, &inst.k, 200).unwrap().0;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn best_reply_monotone_in_other_thresholds(inst in populous(instance(3, 2, 6, 2000)), bump in 0usize..3) {
        let mut bigger = inst.k.as_slice().to_vec();
        let t = bump % bigger.len();
        bigger[t] += 2;
        let a = walkable(best_reply_vector(&inst.spec, &inst.k, 200))?;
        let b = best_reply_vector(&inst.spec, &ThresholdVector::new(bigger), 200).unwrap().0;
        prop_assert!(a.le(&b), "{:?} then {:?}", a.as_slice(), b.as_slice());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn money_conserved_and_ceilings_absorb(inst in instance(3, 3, 5, 30), seed in any::<u64>()) {
        let spec = &inst.spec;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = initial_state(spec, &mut rng);
        let total = start.total();
        let mut sim = Simulator::new(spec, &inst.k, start).unwrap();
        let cap = |agent: usize| inst.k.get(spec.type_of_agent(agent as u64));
        let mut absorbed: Vec<bool> = sim.holdings().iter().enumerate().map(|(a, &x)| x <= cap(a)).collect();
        for _ in 0..3000 {
            sim.step(&mut rng);
            prop_assert_eq!(sim.holdings().iter().sum::<u64>(), total);
            for (a, &x) in sim.holdings().iter().enumerate() {
                if absorbed[a] {
                    prop_assert!(x <= cap(a));
                }
                absorbed[a] |= x <= cap(a);
            }
        }
    }

    #[test]
    fn exact_chains_are_ergodic_and_match_product_form(inst in common_chi_instance()) {
        let exact = exact_stationary(&inst.spec, &inst.k, 50_000).unwrap();
        prop_assert!(exact.max_abs_difference <= 1e-8);
        prop_assert!(exact.detailed_balance_residual <= 1e-10);
        let total: f64 = exact.solved.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(exact.solved.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn symmetric_chain_has_symmetric_matrix(agents in 3u64..6, k in 1u64..4, money in any::<prop::sample::Index>(), chi in 0.5f64..2.0) {
        let raw = RawAgentType { alpha: 0.1, beta: 0.7, gamma: 1.0, delta: 0.9, rho: 1.0, chi };
        let mh = 1 + money.index((agents * k - 1) as usize) as u64;
        let spec = build_game_spec(vec![raw], vec![1.0], agents, Money::new(mh, agents).unwrap(), 1)
            .unwrap()
            .spec;
        let k = ThresholdVector::new(vec![k]);
        let states = enumerate_states(&spec, &k, 50_000).unwrap();
        let matrix = transition_matrix(&spec, &k, &states).unwrap();
        for x in 0..matrix.len() {
            for &(y, p) in matrix.row(x) {
                prop_assert!((p - matrix.get(y, x)).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn greatest_equilibrium_properties(inst in populous(instance(2, 2, 3, 500)), delta in 0.9f64..0.999) {
        let raw: Vec<RawAgentType> = inst
            .spec
            .types()
            .iter()
            .map(|t| RawAgentType { delta, ..RawAgentType::from(*t) })
            .collect();
        let spec = inst.spec.with_types(raw).unwrap();
        let result = match greatest_equilibrium(&spec, Some(40)) {
            Err(ScripError::InvalidProbabilities { .. }) => return Err(TestCaseError::reject("no valid walk")),
            r => r.unwrap(),
        };
        prop_assume!(result.classification != Classification::Capped);
        let k_star = &result.k_star;
        for pair in result.trace.windows(2) {
            prop_assert!(pair[1].le(&pair[0]));
        }
        prop_assert!(result.trace.len() as u64 <= result.cap * spec.num_types() as u64 + 2);
        if spec.below_capacity(k_star) {
            prop_assert_eq!(&best_reply_vector(&spec, k_star, result.cap).unwrap().0, k_star);
        }
        // no fixed point above k* in the box up to k* + 2
        let tops: Vec<u64> = k_star.as_slice().iter().map(|k| k + 2).collect();
        for candidate in lattice(&tops) {
            let c = ThresholdVector::new(candidate);
            if c.le(k_star) || !spec.below_capacity(&c) {
                continue;
            }
            prop_assert_ne!(best_reply_vector(&spec, &c, result.cap).unwrap().0, c);
        }
    }
}

fn lattice(tops: &[u64]) -> Vec<Vec<u64>> {
    tops.iter().fold(vec![Vec::new()], |acc, &top| {
        acc.into_iter()
            .flat_map(|prefix| {
                (0..=top).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

/// Another point of the feasible set: move mass `w` between levels `i < j < l`
/// of one type so the marginal and the mean stay put.
fn perturb(d: &MoneyDistribution, weights: &[f64]) -> Option<MoneyDistribution> {
    let mut levels = d.levels().to_vec();
    let mut moved = false;
    for (t, row) in levels.iter_mut().enumerate() {
        let top = row.len();
        if top < 3 {
            continue;
        }
        let w = weights[t % weights.len()];
        let i = (weights[(t + 1) % weights.len()] * (top - 2) as f64) as usize;
        let (j, l) = (i + 1, i + 2);
        // take eps from j, give eps/2 to i and eps/2 to l: mean unchanged
        let eps = w * row[j];
        row[j] -= eps;
        row[i] += eps / 2.0;
        row[l] += eps / 2.0;
        moved |= eps > 1e-9;
    }
    moved.then(|| MoneyDistribution::new(levels))
}

fn mix(a: &MoneyDistribution, b: &MoneyDistribution, s: f64) -> MoneyDistribution {
    let levels = a
        .levels()
        .iter()
        .zip(b.levels())
        .map(|(x, y)| x.iter().zip(y).map(|(x, y)| (1.0 - s) * x + s * y).collect())
        .collect();
    MoneyDistribution::new(levels)
}

#[test]
fn best_reply_overtakes_thresholds_as_agents_become_patient() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let gamma = rand::Rng::random_range(&mut rng, 0.5..2.0);
        let raw = RawAgentType {
            alpha: gamma * rand::Rng::random_range(&mut rng, 0.05..0.5),
            beta: 1.0,
            gamma,
            delta: 0.5,
            rho: 1.0,
            chi: 1.0,
        };
        let spec = build_game_spec(vec![raw], vec![1.0], 2, Money::new(3, 2).unwrap(), 100).unwrap().spec;
        let k = ThresholdVector::new(vec![spec.m().ceil() + 1]);
        let mut found = false;
        for delta in [0.9, 0.99, 0.999, 0.9999] {
            let patient = spec.with_types(vec![RawAgentType { delta, ..raw }]).unwrap();
            let next = best_reply_vector(&patient, &k, 10_000).unwrap().0;
            if next.get(0) > k.get(0) {
                found = true;
                break;
            }
        }
        assert!(found, "no patient discount produced BR(k) > k for {raw:?}");
    }
}

#[test]
fn greatest_equilibrium_falls_with_money() {
    let raw = RawAgentType { alpha: 0.3, beta: 1.0, gamma: 1.0, delta: 0.99, rho: 1.0, chi: 1.0 };
    let mut previous = u64::MAX;
    for mh in 1..=8 {
        let spec = build_game_spec(vec![raw], vec![1.0], 2, Money::new(mh, 2).unwrap(), 500).unwrap().spec;
        let k = greatest_equilibrium(&spec, None).unwrap().k_star.get(0);
        assert!(k <= previous, "m = {mh}/2: {k} above {previous}");
        previous = k;
    }
}

#[test]
fn dstar_beats_a_two_dimensional_grid() {
    // single type, k = 3: four levels, two constraints, two free dimensions
    for (omega_rho, mh) in [(0.5, 3u64), (1.0, 5), (2.0, 2), (1.3, 4)] {
        let raw = RawAgentType { alpha: 0.1, beta: 1.0, gamma: 1.0, delta: 0.9, rho: 1.0 / omega_rho, chi: 1.0 };
        let spec = build_game_spec(vec![raw], vec![1.0], 4, Money::new(mh, 4).unwrap(), 1).unwrap().spec;
        let k = ThresholdVector::new(vec![3]);
        let star = min_relent_distribution(&spec, &k).unwrap();
        let q = base_distribution(&spec, &k).unwrap();
        let h_star = relative_entropy(&star, &q).unwrap();
        let m = spec.m().as_f64();
        let step = 1e-3;
        let mut best = f64::INFINITY;
        for a in 0..=1000 {
            for b in 0..=1000 - a {
                // d0 = a, d1 = b; d2, d3 from the marginal and the mean
                let (d0, d1) = (a as f64 * step, b as f64 * step);
                let rest = 1.0 - d0 - d1;
                let d3 = m - d1 - 2.0 * rest;
                let d2 = rest - d3;
                if d2 < 0.0 || d3 < 0.0 {
                    continue;
                }
                let d = MoneyDistribution::new(vec![vec![d0, d1, d2, d3]]);
                best = best.min(relative_entropy(&d, &q).unwrap());
            }
        }
        assert!(best >= h_star - 1e-6, "grid point beats d*: {best} < {h_star}");
        assert!(best - h_star < 1e-3);
    }
}

#[test]
fn initial_holdings_are_binomial() {
    // each of M dollars lands on a uniform agent: holdings ~ Binomial(M, 1/A)
    let spec = scrip_core::experiment::reference_spec(2000).unwrap();
    let agents = spec.agents() as f64;
    let money = spec.total_money();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0f64; 12];
    let mut draws = 0.0;
    for _ in 0..5 {
        for &x in initial_state(&spec, &mut rng).holdings() {
            counts[(x as usize).min(11)] += 1.0;
            draws += 1.0;
        }
    }
    let p = 1.0 / agents;
    let mut pmf = Vec::with_capacity(12);
    let mut log_choose = 0.0f64;
    for x in 0..11u64 {
        if x > 0 {
            log_choose += ((money - x + 1) as f64).ln() - (x as f64).ln();
        }
        pmf.push((log_choose + x as f64 * p.ln() + (money - x) as f64 * (-p).ln_1p()).exp());
    }
    pmf.push(1.0 - pmf.iter().sum::<f64>());
    let chi2: f64 = counts
        .iter()
        .zip(&pmf)
        .filter(|(_, &p)| p * draws >= 5.0)
        .map(|(&o, &p)| (o - p * draws).powi(2) / (p * draws))
        .sum();
    // 99.9% point of chi-square with at most 11 degrees of freedom
    assert!(chi2 < 31.3, "chi-square {chi2}");
}
