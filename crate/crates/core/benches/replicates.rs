//! Sequential against data-parallel replicate execution. Results are
//! identical either way; only wall time differs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spinekit::estimators::{estimate_direct, estimate_spine, ModelSpec, RunConfig, Statistic};
use spinekit::laws::MotionModel;
use spinekit::sim_ct::ContinuousModel;
use spinekit::sim_dt::{builtin_grid, run_grid, MomentConvention, ORACLE_BUDGET};
use spinekit::Execution;

fn executions() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::sequential()), ("parallel", Execution::parallel(0))]
}

fn estimators(c: &mut Criterion) {
    let spec = ModelSpec::Continuous {
        model: ContinuousModel::binary_bbm(MotionModel::Brownian),
        horizon: 1.0,
    };
    let stat = Statistic::one(2);
    let mut group = c.benchmark_group("k2-bbm-20000");
    group.sample_size(10);
    for (name, exec) in executions() {
        let cfg = RunConfig::new(20_000, 1).with_exec(exec);
        group.bench_with_input(BenchmarkId::new("direct", name), &cfg, |b, cfg| {
            b.iter(|| estimate_direct(&spec, &stat, cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("spine", name), &cfg, |b, cfg| {
            b.iter(|| estimate_spine(&spec, &stat, cfg).unwrap())
        });
    }
    group.finish();
}

fn oracle_grid(c: &mut Criterion) {
    let cases = builtin_grid();
    let mut group = c.benchmark_group("discrete-grid");
    group.sample_size(10);
    for (name, exec) in executions() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| run_grid(&cases, MomentConvention::PerNode, ORACLE_BUDGET, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, estimators, oracle_grid);
criterion_main!(benches);
