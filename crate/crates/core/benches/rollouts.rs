use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use alfi::meta::{batch_gradient, init_model, make_meta_dataset, validation_rmse, Execution, MetaProblem, RolloutSpec, TrainConfig};
use alfi::simulators::{SimulatorKind, SimulatorSpec};
use alfi::RandomSource;

fn meta_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("meta_batch_gradient");
    group.sample_size(10);
    for kind in [SimulatorKind::Poisson, SimulatorKind::Multivariate] {
        let sim = SimulatorSpec::from_kind(kind);
        let cfg = TrainConfig::defaults_for(kind);
        let model = init_model(&sim, &cfg).unwrap();
        let spec = RolloutSpec::from(&cfg);
        let problems = make_meta_dataset(&sim, cfg.meta_batch_size, cfg.x_batch, &RandomSource::new(1)).unwrap();
        let refs: Vec<&MetaProblem> = problems.iter().collect();
        let rngs: Vec<RandomSource> = (0..refs.len()).map(|i| RandomSource::new(100 + i as u64)).collect();
        for exec in [Execution::Parallel, Execution::Sequential] {
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), sim.name()), &exec, |b, &exec| {
                b.iter(|| batch_gradient(&model, &sim, &spec, &refs, &rngs, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("validation_rollouts");
    group.sample_size(10);
    let sim = SimulatorSpec::poisson();
    let cfg = TrainConfig::defaults_for(SimulatorKind::Poisson);
    let model = init_model(&sim, &cfg).unwrap();
    let spec = RolloutSpec::from(&cfg);
    let problems = make_meta_dataset(&sim, 32, cfg.x_batch, &RandomSource::new(2)).unwrap();
    for exec in [Execution::Parallel, Execution::Sequential] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| validation_rmse(&model, &sim, &spec, &problems, &RandomSource::new(3), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, meta_batch, evaluation);
criterion_main!(benches);
