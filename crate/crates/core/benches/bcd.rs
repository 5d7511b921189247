use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mawsr::channel::generate_scenario;
use mawsr::driver::{run_bcd, BaselineKind};
use mawsr::montecarlo::run_monte_carlo_with;
use mawsr::par::Execution;
use mawsr::scenario::{MovementMode, ScenarioConfig};

fn config(mode: MovementMode) -> ScenarioConfig {
    let mut c = ScenarioConfig {
        num_bs_antennas: 8,
        num_users: 3,
        mode,
        ..ScenarioConfig::default()
    };
    c.solver.max_iters = 30;
    c
}

fn monte_carlo(c: &mut Criterion) {
    let cfg = config(MovementMode::General);
    let mut group = c.benchmark_group("monte_carlo_8_trials");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| run_monte_carlo_with(black_box(&cfg), &[BaselineKind::TmaRma], 8, exec).unwrap())
        });
    }
    group.finish();
}

fn movement_modes(c: &mut Criterion) {
    let mut group = c.benchmark_group("bcd_run");
    group.sample_size(20);
    for mode in [MovementMode::General, MovementMode::Planar] {
        let cfg = config(mode);
        let scenario = generate_scenario(&cfg).unwrap();
        group.bench_function(mode.as_str(), |b| {
            b.iter(|| run_bcd(black_box(&scenario), &cfg.solver, BaselineKind::TmaRma).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, movement_modes);
criterion_main!(benches);
