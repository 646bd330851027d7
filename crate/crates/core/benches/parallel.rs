use std::collections::{BTreeMap, HashSet};
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nesphere::embedding::nearest_neighbors_with;
use nesphere::features::compute_features_with;
use nesphere::hypersphere::evaluate_hypersphere_with;
use nesphere::mapping::cost_matrix;
use nesphere::synth::{generate_space, SynthSpec};
use nesphere::{
    mc_overlap, solve_transport, DiscreteDistribution, Execution, Hypersphere, LinearMap, McConfig,
    NeType, Sampler, TransportConfig, Vector,
};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn bench(c: &mut Criterion) {
    let synth = generate_space(&SynthSpec::benchmark(1)).unwrap();
    let space = &synth.space;
    let per = &synth.truth[&NeType::Per];
    let mapped = Hypersphere::new(
        Vector::new(per.center().as_slice().iter().map(|x| x + 0.2).collect()).unwrap(),
        per.radius() * 1.05,
        NeType::Per,
    )
    .unwrap();
    let dict = synth.dictionary.entries(NeType::Per);
    let src = DiscreteDistribution::from_space(space, Some(400)).unwrap();
    let tgt = DiscreteDistribution::from_space(space, Some(400)).unwrap();
    let w = LinearMap::identity(space.dim());
    let cost = cost_matrix(&w, &src, &tgt, Execution::Sequential).unwrap();
    let spheres: BTreeMap<_, _> = synth.truth.clone();
    let none = HashSet::new();

    let mut g = c.benchmark_group("execution");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new("mc_overlap", name), |b| {
            let cfg = McConfig {
                samples: 200_000,
                sampler: Sampler::BallUniform,
                execution: exec,
                ..McConfig::default()
            };
            b.iter(|| mc_overlap(black_box(per), &mapped, &cfg).unwrap())
        });
        g.bench_function(BenchmarkId::new("nearest_neighbors", name), |b| {
            b.iter(|| {
                nearest_neighbors_with(space, black_box(per.center().as_slice()), 50, &none, exec)
                    .unwrap()
            })
        });
        g.bench_function(BenchmarkId::new("evaluate_hypersphere", name), |b| {
            b.iter(|| evaluate_hypersphere_with(black_box(per), space, dict, exec).unwrap())
        });
        g.bench_function(BenchmarkId::new("compute_features", name), |b| {
            b.iter(|| compute_features_with(space, black_box(&spheres), exec).unwrap())
        });
        g.bench_function(BenchmarkId::new("cost_matrix", name), |b| {
            b.iter(|| cost_matrix(black_box(&w), &src, &tgt, exec).unwrap())
        });
        g.bench_function(BenchmarkId::new("sinkhorn", name), |b| {
            let cfg = TransportConfig {
                execution: exec,
                tol: 1e-6,
                ..TransportConfig::entropic(1.0)
            };
            b.iter(|| {
                solve_transport(black_box(&cost), src.weights(), tgt.weights(), &cfg).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
