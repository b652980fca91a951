//! Sequential versus rayon execution of the replicate loops and the pattern
//! enumeration. Build with `--no-default-features` to time the fallback alone.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sieve_lab::exact::{enumerate_finite, EnumerationOptions};
use sieve_lab::par::Execution;
use sieve_lab::point_process::{replicate_limit_kr, replicate_limit_z, StopParams};
use sieve_lab::sieve::{replicate, ReplicateConfig};
use sieve_lab::StickLaw;
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn finite_sieve(c: &mut Criterion) {
    let law = StickLaw::uniform();
    let mut group = c.benchmark_group("finite_sieve");
    group.sample_size(10);
    for n in [1_000u32, 100_000] {
        for (name, execution) in MODES {
            let cfg = ReplicateConfig {
                execution,
                ..ReplicateConfig::new(n, 5_000, 1)
            };
            group.bench_with_input(BenchmarkId::new(name, n), &cfg, |b, cfg| {
                b.iter(|| black_box(replicate(&law, cfg).unwrap()))
            });
        }
    }
    group.finish();
}

fn limit_model(c: &mut Criterion) {
    let law = StickLaw::beta(1.5, 2.5).unwrap();
    law.warm_up().unwrap();
    let mut group = c.benchmark_group("limit_model");
    group.sample_size(10);
    for (name, execution) in MODES {
        group.bench_function(BenchmarkId::new("z_prefix", name), |b| {
            b.iter(|| black_box(replicate_limit_z(&law, 2, 20_000, 2, execution).unwrap()))
        });
        group.bench_function(BenchmarkId::new("small_parts", name), |b| {
            b.iter(|| black_box(replicate_limit_kr(&law, 2, &StopParams::default(), 2_000, 3, execution).unwrap()))
        });
    }
    group.finish();
}

fn enumeration(c: &mut Criterion) {
    let law = StickLaw::uniform();
    let mut group = c.benchmark_group("enumeration");
    group.sample_size(10);
    for (name, execution) in MODES {
        let opts = EnumerationOptions {
            execution,
            ..EnumerationOptions::default()
        };
        group.bench_function(BenchmarkId::new("n5_kmax40", name), |b| {
            b.iter(|| black_box(enumerate_finite(&law, 5, 40, &opts).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, finite_sieve, limit_model, enumeration);
criterion_main!(benches);
