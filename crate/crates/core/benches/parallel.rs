use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use seeker_core::field::{FieldSpec, GaussianBump, LinearFieldParams, TargetPath};
use seeker_core::par::{self, Execution};
use seeker_core::sim::integrate;
use seeker_core::tuning::{estimate_bounds, GridAnchor, LevelFunction, RegionSpec, SampleGrid};
use seeker_core::{ControllerParams, Vec2};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn region_sampling(c: &mut Criterion) {
    let field = FieldSpec::gaussian(vec![GaussianBump {
        amplitude: 1.0,
        width: 3.0,
        path: TargetPath::Circle { cx: 0.0, cy: 0.0, radius: 1.0, omega: 0.1, phase: 0.0 },
    }])
    .unwrap();
    let region = RegionSpec::new(
        LevelFunction::constant(0.1),
        LevelFunction::constant(0.6),
        LevelFunction::constant(0.8),
        0.2,
        2.2,
    )
    .unwrap();
    let grid = SampleGrid { half_width: 5.0, n_space: 121, n_time: 9, t_horizon: 100.0, anchor: GridAnchor::Maximizer };
    let mut group = c.benchmark_group("region_sampling");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_bounds(black_box(&field), &region, &grid, exec).unwrap())
        });
    }
    group.finish();
}

fn scenario_batch(c: &mut Criterion) {
    let runs: Vec<(FieldSpec, ControllerParams)> = (0..32)
        .map(|i| {
            let phi = 0.2 * i as f64;
            let field = FieldSpec::Linear(LinearFieldParams::new(1.0, phi, 0.0).unwrap());
            (field, ControllerParams::new(1.0, 0.5, 2.0, -1.0).unwrap())
        })
        .collect();
    let mut group = c.benchmark_group("scenario_batch");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::map(exec, &runs, |(f, p)| integrate(f, p, Vec2::zeros(), 10.0, 1e-3).unwrap().samples.len()))
        });
    }
    group.finish();
}

criterion_group!(benches, region_sampling, scenario_batch);
criterion_main!(benches);
