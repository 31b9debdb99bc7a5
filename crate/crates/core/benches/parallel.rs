use calabi_core::reports::{invariance_report, sweep, variation_functions};
use calabi_core::*;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn bench_invariance(c: &mut Criterion) {
    let g = make_cp1_geometry();
    let h = FunctionDescriptor::Power(2.0);
    let phi = normalize_potential(&g, 0.0);
    let mut group = c.benchmark_group("invariance_64");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| invariance_report(&g, &h, &phi, 64, 1, 0.3, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let g = make_cp1_geometry();
    let (fs, hs) = variation_functions();
    let phi = normalize_potential(&g, 8.0 * std::f64::consts::PI);
    let opts = SolverOptions::default();
    let mut group = c.benchmark_group("sweep_3x3");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep(&g, &fs, &hs, &phi, 1e-6, &opts, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_invariance, bench_sweep);
criterion_main!(benches);
