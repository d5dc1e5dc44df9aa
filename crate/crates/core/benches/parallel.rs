//! Single-thread pool against the default rayon pool for the two
//! data-parallel workloads: Monte Carlo replications and permutation draws.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;
use sharprd::continuity::EstimateOptions;
use sharprd::locrand::{extract_window, permutation_test, Scheme, StatisticKind, Window};
use sharprd::simulate::{generate, monte_carlo_coverage, DGPSpec};

fn spec() -> DGPSpec {
    DGPSpec::new(
        vec![0.0, 1.0, -2.0],
        vec![1.0, 1.0, 2.0],
        1.0,
        -1.0,
        1.0,
        0.0,
    )
    .unwrap()
}

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let default = ThreadPoolBuilder::new().build().unwrap();
    let label = format!("default-pool-{}", default.current_num_threads());
    vec![
        (
            "1-thread".to_string(),
            ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
        ),
        (label, default),
    ]
}

fn coverage(c: &mut Criterion) {
    let spec = spec();
    let opts = EstimateOptions::default();
    let mut group = c.benchmark_group("monte_carlo_coverage");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new(name, "n=1000 reps=200"), |b| {
            b.iter(|| {
                pool.install(|| monte_carlo_coverage(&spec, 1000, 200, 0.95, 1, &opts).unwrap())
            })
        });
    }
    group.finish();
}

fn permutations(c: &mut Criterion) {
    let ds = generate(&spec(), 4000, 2).unwrap();
    let ws = extract_window(&ds, &Window::symmetric(0.0, 0.25).unwrap()).unwrap();
    let mut group = c.benchmark_group("permutation_test");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new(name, "N=1000 draws=20000"), |b| {
            b.iter(|| {
                pool.install(|| {
                    permutation_test(
                        &ws,
                        StatisticKind::DiffMeans,
                        Scheme::MonteCarlo { draws: 20_000 },
                        3,
                    )
                    .unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, coverage, permutations);
criterion_main!(benches);
