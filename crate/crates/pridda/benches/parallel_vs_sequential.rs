//! Compares the data-parallel execution paths against the sequential
//! fallback on the two Monte-Carlo hot spots: mixing-parameter estimation
//! and multi-seed engine runs. Both paths produce bit-identical results;
//! the benchmark measures the throughput difference.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pridda::engine::{self, NoiseModel, RunConfig, Schedule};
use pridda::exec::ExecMode;
use pridda::problems::{generate_synthetic, partition_even, ProblemInstance, Regularizer};
use pridda::topology::{estimate_beta_in, Graph, MatchingSampler};

fn bench_beta_estimation(c: &mut Criterion) {
    let sampler = MatchingSampler::new(Graph::complete(20).unwrap(), 1).unwrap();
    let mut group = c.benchmark_group("estimate_beta_k20");
    for (label, mode) in [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)] {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(42);
                estimate_beta_in(mode, &sampler, 20_000, &mut rng).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_multi_seed_runs(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples = generate_synthetic(500, 10, 1.0, &mut rng);
    let locals = partition_even(samples, 10, &mut rng).unwrap();
    let problem = Arc::new(
        ProblemInstance::new(locals, Regularizer::L2Half { mu: 0.05 }, Some(1.0), Some(10))
            .unwrap(),
    );
    let sampler = Arc::new(MatchingSampler::new(Graph::complete(10).unwrap(), 1).unwrap());
    let configs: Vec<RunConfig> = (0..8)
        .map(|seed| RunConfig {
            problem: problem.clone(),
            schedule: Schedule::strongly_convex(0.05).unwrap(),
            sampler: sampler.clone(),
            noise: NoiseModel::Noiseless,
            horizon: 2000,
            seed,
            trace_stride: 500,
            reference: None,
        })
        .collect();

    let mut group = c.benchmark_group("run_many_8_seeds");
    group.sample_size(10);
    for (label, mode) in [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)] {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| engine::run_many(&configs, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_beta_estimation, bench_multi_seed_runs);
criterion_main!(benches);
