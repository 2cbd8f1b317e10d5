use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use windregime::aggregate::{complex_sum, rotate_wake, simple_sum};
use windregime::flowsim::jensen_simulate;
use windregime::{InflowCondition, KMeansConfig};
use windregime_bench::{Fixture, CHANNELS, SEED};

fn kmeans(c: &mut Criterion) {
    let fx = Fixture::reference(6);
    let features = fx.ds.features(&CHANNELS).unwrap();
    let mut group = c.benchmark_group("kmeans");
    group.sample_size(10);
    for k in [4, 6, 10] {
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| KMeansConfig::new(k).seed(SEED).fit_features(black_box(&features)).unwrap())
        });
    }
    group.finish();
}

fn solver(c: &mut Criterion) {
    let fx = Fixture::reference(6);
    let inflow = InflowCondition::from_dataset(&fx.ds, fx.model.representative_idx[0]).unwrap();
    c.bench_function("jensen_simulate", |b| {
        b.iter(|| jensen_simulate(black_box(&inflow), &fx.farm, 0.05).unwrap())
    });
}

fn aggregation(c: &mut Criterion) {
    let fx = Fixture::reference(6);
    let inputs = fx.inputs();
    let wake = &fx.wakes[0].deficit;
    let center = fx.farm.farm_center;
    c.bench_function("rotate_wake", |b| b.iter(|| rotate_wake(black_box(wake), 0.7, center)));
    c.bench_function("simple_sum", |b| b.iter(|| simple_sum(black_box(&inputs))));
    c.bench_function("complex_sum", |b| b.iter(|| complex_sum(black_box(&inputs))));
}

criterion_group!(benches, kmeans, solver, aggregation);
criterion_main!(benches);
