//! Sequential versus rayon execution of the sampled workloads.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mprlab::model::SystemModel;
use mprlab::par::Exec;
use mprlab::sim::{builtin, rollout_batch};
use mprlab::terminal::{estimate_lyapunov_region, synthesize, RegionConfig, RegionMode};

fn pendulum() -> SystemModel {
    SystemModel::from_scenario(&builtin("pendulum").unwrap(), 4).unwrap()
}

fn region(c: &mut Criterion) {
    let m = pendulum();
    let law = synthesize(&m, 4).unwrap();
    let mut group = c.benchmark_group("lyapunov_region");
    for mode in [RegionMode::Feedback, RegionMode::Clf] {
        for exec in [Exec::Seq, Exec::Par] {
            let cfg = RegionConfig {
                mode,
                exec,
                ..RegionConfig::default()
            };
            group.bench_with_input(
                BenchmarkId::new(format!("{mode:?}"), format!("{exec:?}")),
                &cfg,
                |b, cfg| b.iter(|| estimate_lyapunov_region(&m, &law, black_box(cfg)).unwrap()),
            );
        }
    }
    group.finish();
}

fn rollouts(c: &mut Criterion) {
    let m = pendulum();
    let law = synthesize(&m, 4).unwrap();
    let starts: Vec<(Vec<f64>, Vec<f64>)> = (0..256)
        .map(|i| {
            let a = i as f64 / 256.0 * std::f64::consts::TAU;
            (vec![0.3 * a.cos(), 0.3 * a.sin()], vec![0.3, 0.0])
        })
        .collect();
    let mut group = c.benchmark_group("rollout_batch");
    for exec in [Exec::Seq, Exec::Par] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| rollout_batch(&m, &law, black_box(&starts), 96, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, region, rollouts);
criterion_main!(benches);
