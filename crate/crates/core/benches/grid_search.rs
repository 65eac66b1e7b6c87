use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use matreg::estimation::{estimate_mstar, estimate_mtar};
use matreg::experiments::{mstar_companion_dgp, mtar_companion_dgp, run_monte_carlo, Estimator, McConfig};
use matreg::model::{simulate_path, SimOptions};
use matreg::{Exec, IlsOptions, SlopeThresholdGrid, ThresholdGrid};

fn opts(exec: Exec) -> IlsOptions {
    IlsOptions {
        exec,
        ..Default::default()
    }
}

fn threshold_search(c: &mut Criterion) {
    let model = mtar_companion_dgp(4, 6, 0.3, 1).unwrap();
    let path = simulate_path(&model, 600, &SimOptions::seeded(2)).unwrap();
    let grid = ThresholdGrid::default();
    let mut group = c.benchmark_group("mtar_grid");
    group.sample_size(10);
    for exec in [Exec::Parallel, Exec::Sequential] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| estimate_mtar(&path, &grid, &opts(exec)).unwrap())
        });
    }
    group.finish();
}

fn slope_threshold_search(c: &mut Criterion) {
    let model = mstar_companion_dgp(2, 3, 10.0, 0.65).unwrap();
    let path = simulate_path(&model, 400, &SimOptions::seeded(3)).unwrap();
    let grid = SlopeThresholdGrid::default();
    let mut group = c.benchmark_group("mstar_grid");
    group.sample_size(10);
    for exec in [Exec::Parallel, Exec::Sequential] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| estimate_mstar(&path, &grid, &opts(exec)).unwrap())
        });
    }
    group.finish();
}

fn replications(c: &mut Criterion) {
    let model = mtar_companion_dgp(2, 3, 0.3, 1).unwrap();
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    for exec in [Exec::Parallel, Exec::Sequential] {
        let mut cfg = McConfig::new(model.clone(), 200, 8, vec![Estimator::Mtar, Estimator::Vtar]);
        cfg.exec = exec;
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| run_monte_carlo(cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, threshold_search, slope_threshold_search, replications);
criterion_main!(benches);
