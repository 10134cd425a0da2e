//! Sequential versus rayon execution for the three hot loops: sampling
//! units, oracle rejection sampling and bootstrap replicates.
//!
//! Run with `cargo bench -p didp`. Both arms produce identical output; only
//! the schedule differs.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use didp::oracle::{oracle_estimand, EstimandKind, McConfig};
use didp::scm::{builtin_cars_example, builtin_staggered_dgp, sample_observational, SampleOptions, StaggeredParams};
use didp::{bootstrap_ci, did_classic, BootstrapConfig, Execution};

const ARMS: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn sampling(c: &mut Criterion) {
    let scm = builtin_staggered_dgp(6, 2, &StaggeredParams::default_for(6)).unwrap();
    let mut group = c.benchmark_group("sample_observational");
    for (name, exec) in ARMS {
        let opts = SampleOptions { retain_latent: false, exec };
        group.bench_with_input(BenchmarkId::new(name, 100_000), &opts, |b, opts| {
            b.iter(|| sample_observational(&scm, black_box(100_000), 1, opts).unwrap())
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let scm = builtin_cars_example();
    let mut group = c.benchmark_group("oracle_att_p");
    group.sample_size(10);
    for (name, exec) in ARMS {
        let cfg = McConfig { exec, ..McConfig::new(200_000, 3) };
        group.bench_with_input(BenchmarkId::new(name, cfg.draws), &cfg, |b, cfg| {
            b.iter(|| oracle_estimand(&scm, EstimandKind::AttP, cfg).unwrap())
        });
    }
    group.finish();
}

fn bootstrap(c: &mut Criterion) {
    let panel = sample_observational(&builtin_cars_example(), 5_000, 2, &SampleOptions::default()).unwrap();
    let mut group = c.benchmark_group("bootstrap_did_classic");
    group.sample_size(10);
    for (name, exec) in ARMS {
        let cfg = BootstrapConfig { replicates: 499, seed: 4, exec, ..Default::default() };
        group.bench_with_input(BenchmarkId::new(name, cfg.replicates), &cfg, |b, cfg| {
            b.iter(|| bootstrap_ci(&panel, did_classic, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sampling, oracle, bootstrap);
criterion_main!(benches);
