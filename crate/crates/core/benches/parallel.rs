//! Rayon pool versus one worker on the data-parallel kernels. Build with
//! `--no-default-features` to benchmark the sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nlgcs::harness::{self, ExperimentConfig, GeneratorSource};
use nlgcs::theory::{target_mismatch_mc, EntropySet};
use nlgcs::{generalized_lasso, random_generator, sample_ensemble, LatentVector, LinkSpec, SolverOptions};

#[cfg(feature = "parallel")]
fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("pool")
            .install(f),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<R: Send>(_threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    f()
}

fn modes() -> Vec<(&'static str, Option<usize>)> {
    if nlgcs::par::is_parallel() {
        vec![("pool", None), ("one_thread", Some(1))]
    } else {
        vec![("sequential", None)]
    }
}

fn bench_mismatch(c: &mut Criterion) {
    let mut group = c.benchmark_group("target_mismatch_mc");
    group.sample_size(10);
    let x = vec![0.3; 10];
    for (name, threads) in modes() {
        group.bench_function(BenchmarkId::new(name, "1e5"), |b| {
            b.iter(|| with_threads(threads, || target_mismatch_mc(&LinkSpec::Sign, 0.8, &x, 100_000, 1).unwrap()))
        });
    }
    group.finish();
}

fn bench_solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("generalized_lasso");
    group.sample_size(10);
    let gen = random_generator(&[10, 50, 100, 200], None, 1).unwrap();
    let ens = sample_ensemble(400, 200, LinkSpec::Sign, 0.0, 2).unwrap();
    let x = gen.forward(&LatentVector::new(vec![0.4; 10])).unwrap();
    let y = ens.observe(&x, 0).unwrap();
    ens.gram();
    let opts = SolverOptions {
        restarts: 8,
        steps: 100,
        t_scale: 0.8,
        ..Default::default()
    };
    for (name, threads) in modes() {
        group.bench_function(BenchmarkId::new(name, "8x100"), |b| {
            b.iter(|| with_threads(threads, || generalized_lasso(&ens, &y, &gen, &opts).unwrap()))
        });
    }
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("uniform_sweep");
    group.sample_size(10);
    let cfg = ExperimentConfig {
        generator: GeneratorSource::Random {
            dims: vec![4, 20, 40],
            seed: 1,
            radius: None,
        },
        m_grid: vec![40, 80, 160],
        n_signals: 4,
        n_trials: 2,
        solver: SolverOptions {
            restarts: 4,
            steps: 100,
            ..Default::default()
        },
        ..harness::preset("onebit").unwrap()
    };
    for (name, threads) in modes() {
        group.bench_function(BenchmarkId::new(name, "small"), |b| {
            b.iter(|| with_threads(threads, || harness::run_uniform_sweep(&cfg).unwrap()))
        });
    }
    group.finish();
}

fn bench_entropy(c: &mut Criterion) {
    c.bench_function("entropy_bound", |b| {
        b.iter(|| nlgcs::theory::entropy_bound(EntropySet::Normalized, 20, 10.0, 1.0, 0.8, 0.1, 0.3).unwrap())
    });
}

criterion_group!(benches, bench_mismatch, bench_solver, bench_sweep, bench_entropy);
criterion_main!(benches);
