//! Parallel map against the sequential fallback on the sweep kernels.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use kflow::coercivity::coercive_matrix_check;
use kflow::dns::{initial_state, integrate_fixed, SimConfig, Solver};
use kflow::par;
use kflow::resolvent::{lambda_grid, rayleigh_probe};
use kflow::shear::ShearProfile;

fn resolvent_sweep(c: &mut Criterion) {
    let v = ShearProfile::cosine();
    let points: Vec<(f64, f64)> =
        [2.0, 4.0, 6.0, 8.0].iter().flat_map(|&k| lambda_grid(-1.5, 1.5, 8).into_iter().map(move |l| (k, l))).collect();
    let probe = |&(k, l): &(f64, f64)| rayleigh_probe(&v, k, l, 1e-2, 64).map(|p| p.ratio1).unwrap_or(f64::NAN);
    let mut g = c.benchmark_group("rayleigh_probes_32");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("map", par::is_parallel()), |b| b.iter(|| par::map(black_box(&points), probe)));
    g.bench_function("map_sequential", |b| b.iter(|| par::map_sequential(black_box(&points), probe)));
    g.finish();
}

fn coercive_sweep(c: &mut Criterion) {
    let points: Vec<(f64, f64)> = [2.0, 4.0].iter().flat_map(|&k| [0.0, 0.2, 0.4].map(|s| (k, s))).collect();
    let check = |&(k, s): &(f64, f64)| coercive_matrix_check(k, s, 32).map(|c| c.min_eig).unwrap_or(f64::NAN);
    let mut g = c.benchmark_group("coercive_checks_6");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("map", par::is_parallel()), |b| b.iter(|| par::map(black_box(&points), check)));
    g.bench_function("map_sequential", |b| b.iter(|| par::map_sequential(black_box(&points), check)));
    g.finish();
}

fn dns_step(c: &mut Criterion) {
    let cfg = SimConfig { nx: 128, ny: 128, ..SimConfig::default() };
    let grid = cfg.validate().unwrap();
    let mut solver = Solver::new(grid, cfg.nu);
    let s0 = initial_state(&solver, &cfg).unwrap();
    let mut g = c.benchmark_group("dns");
    g.sample_size(10);
    g.bench_function("ten_steps_128", |b| b.iter(|| integrate_fixed(&mut solver, black_box(&s0), 0.01, 10).unwrap()));
    g.finish();
}

criterion_group!(benches, resolvent_sweep, coercive_sweep, dns_step);
criterion_main!(benches);
