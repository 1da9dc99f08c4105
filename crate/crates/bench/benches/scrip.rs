use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scrip_bench::{near_steady_state, reference, three_types, tiny};
use scrip_core::chain::{exact_stationary, DEFAULT_STATE_CAP};
use scrip_core::{best_reply_vector, greatest_equilibrium, solve_lambda, Simulator};

fn simulator_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for n in [1_000u64, 25_000] {
        let (spec, k) = reference(n);
        let start = near_steady_state(&spec, &k);
        group.bench_with_input(BenchmarkId::new("reference_1000_rounds", n), &n, |b, _| {
            b.iter_batched(
                || (Simulator::new(&spec, &k, start.clone()).unwrap(), ChaCha8Rng::seed_from_u64(1)),
                |(mut sim, mut rng)| {
                    for _ in 0..1000 {
                        sim.step(&mut rng);
                    }
                    sim
                },
                BatchSize::SmallInput,
            )
        });
    }
    let (spec, k) = three_types(100);
    let start = near_steady_state(&spec, &k);
    group.bench_function("three_types_1000_rounds", |b| {
        b.iter_batched(
            || (Simulator::new(&spec, &k, start.clone()).unwrap(), ChaCha8Rng::seed_from_u64(1)),
            |(mut sim, mut rng)| {
                for _ in 0..1000 {
                    sim.step(&mut rng);
                }
                sim
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn lambda(c: &mut Criterion) {
    let (spec, k) = reference(1000);
    c.bench_function("solve_lambda/reference", |b| b.iter(|| solve_lambda(&spec, &k).unwrap()));
    let (spec, k) = three_types(100);
    c.bench_function("solve_lambda/three_types", |b| b.iter(|| solve_lambda(&spec, &k).unwrap()));
}

fn best_replies(c: &mut Criterion) {
    let (spec, k) = three_types(100);
    c.bench_function("best_reply_vector/three_types", |b| {
        b.iter(|| best_reply_vector(&spec, &k, 200).unwrap())
    });
    c.bench_function("greatest_equilibrium/three_types", |b| {
        b.iter(|| greatest_equilibrium(&spec, None).unwrap())
    });
}

fn exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_stationary");
    group.sample_size(10);
    for (agents, k, money) in [(4u64, 3u64, 6u64), (6, 4, 12)] {
        let (spec, kk) = tiny(agents, k, money);
        group.bench_function(format!("{agents}_agents_k{k}"), |b| {
            b.iter(|| exact_stationary(&spec, &kk, DEFAULT_STATE_CAP).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, simulator_steps, lambda, best_replies, exact);
criterion_main!(benches);
