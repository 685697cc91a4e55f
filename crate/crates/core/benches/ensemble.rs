use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use coherent_heat::greens::{pastur_solve, uniform_grid};
use coherent_heat::harness::{run, ExperimentConfig, ExperimentKind};
use coherent_heat::rmt_chain::ChainParams;
use coherent_heat::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn scaling_ensemble(c: &mut Criterion) {
    let config = ExperimentConfig::from_toml_str(
        ExperimentKind::Scaling,
        "realizations = 8\nblock_dim = 30\nk_list = [2, 3, 4]",
        &[],
    )
    .unwrap();
    let mut group = c.benchmark_group("scaling_ensemble");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run(&config, Some(exec)).unwrap())
        });
    }
    group.finish();
}

fn pastur_grid(c: &mut Criterion) {
    let params = ChainParams {
        blocks: 16,
        ..ChainParams::default()
    };
    let grid = uniform_grid(-1.5, 1.5, 401);
    let mut group = c.benchmark_group("pastur_grid");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| pastur_solve(&params, &grid, 1e-3, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, scaling_ensemble, pastur_grid);
criterion_main!(benches);
