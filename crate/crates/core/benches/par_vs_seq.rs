//! Rayon fan-out against the sequential path on independent experiments.

use criterion::{criterion_group, criterion_main, Criterion};

use meshsim::bench::experiment::{run_suite, run_suite_seq, ExperimentSpec, Shape};
use meshsim::config::MachineConfig;
use meshsim::kernels::stencil::Exchange;

fn specs() -> Vec<ExperimentSpec> {
    let mut v = vec![ExperimentSpec::latency(), ExperimentSpec::bandwidth()];
    for q in [2, 4, 8] {
        v.push(ExperimentSpec::matmul(16 * q, Shape::new(q, q)));
        v.push(ExperimentSpec::stencil_blocks(40, 20, Shape::new(q, q), 10, Exchange::Halo));
    }
    v
}

fn suite(c: &mut Criterion) {
    let cfg = MachineConfig::default();
    let specs = specs();
    let mut g = c.benchmark_group("suite");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| run_suite(&specs, &cfg)));
    g.bench_function("sequential", |b| b.iter(|| run_suite_seq(&specs, &cfg)));
    g.finish();
}

criterion_group!(benches, suite);
criterion_main!(benches);
