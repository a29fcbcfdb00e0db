use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nlsmod::config::GridSpec;
use nlsmod::geometry::BranchpointSet;
use nlsmod::modulation::design_polynomial_f0;
use nlsmod::rhp::{EngineOptions, RhpSolution};
use nlsmod::sample::sample_grid;
use nlsmod::scattering::ScatteringData;
use nlsmod::{par, Complex64 as C};

fn fixture() -> (BranchpointSet, ScatteringData) {
    let bps = BranchpointSet::from_upper(&[C::new(0.0, 1.0), C::new(1.0, 0.8), C::new(2.0, 0.6)])
        .unwrap();
    let coef = design_polynomial_f0(&bps, 0.3, 0.1, &EngineOptions::default()).unwrap();
    (bps, ScatteringData::polynomial(3, &coef))
}

fn bench(c: &mut Criterion) {
    let (bps, sd) = fixture();
    let opts = EngineOptions::default();
    let sol = RhpSolution::solve(&bps, &sd, 0.3, 0.1, &opts).unwrap();
    let grid = GridSpec {
        re: [-1.0, 3.0],
        im: [-1.5, 1.5],
        nx: 20,
        ny: 20,
        solve_first: false,
    };

    for (label, sequential) in [("parallel", false), ("sequential", true)] {
        par::set_sequential(sequential);
        let mut g = c.benchmark_group(label);
        g.sample_size(10);
        g.bench_function("solve_constants", |b| {
            b.iter(|| RhpSolution::solve(black_box(&bps), &sd, 0.3, 0.1, &opts).unwrap())
        });
        g.bench_function("sample_20x20", |b| {
            b.iter(|| sample_grid(black_box(&sol), &grid).unwrap())
        });
        g.finish();
    }
    par::set_sequential(false);
}

criterion_group!(benches, bench);
criterion_main!(benches);
