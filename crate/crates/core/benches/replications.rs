use criterion::{criterion_group, criterion_main, Criterion};
use teamlearn::experiments::{run_experiment, Execution, ExperimentConfig};
use teamlearn::policy::PolicySpec;

fn replications(c: &mut Criterion) {
    let cfg = ExperimentConfig::new(PolicySpec::KstopEc, 1024, 0.5, 16, 7);
    let mut g = c.benchmark_group("kstop-ec n=1024 x16");
    g.sample_size(10);
    g.bench_function("serial", |b| b.iter(|| run_experiment(&cfg, Execution::Serial).unwrap()));
    g.bench_function("parallel", |b| b.iter(|| run_experiment(&cfg, Execution::Parallel).unwrap()));
    g.finish();
}

criterion_group!(benches, replications);
criterion_main!(benches);
