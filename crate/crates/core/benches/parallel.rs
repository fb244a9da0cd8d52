use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use visitslot::dataset::{generate_dataset, Dataset, PopulationProfile};
use visitslot::full_infection::build_pn_table;
use visitslot::gp::{run_pirs, Evaluator, GpConfig, Workspace};
use visitslot::par::{map_slice, Exec};
use visitslot::simulator::Model;

const MODES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn dataset() -> Dataset {
    let mut ds = generate_dataset(1, &PopulationProfile::canonical()).unwrap();
    ds.priors = "20=0.01;40=0.03;50=0.02".parse().unwrap();
    ds
}

fn pn_table(c: &mut Criterion) {
    let mut group = c.benchmark_group("pn_table_q10_50k");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_pn_table(10, 50_000, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn batch_scoring(c: &mut Criterion) {
    let ds = dataset();
    let eval = Evaluator::new(&ds, &Model::Partial { s: 4 }, 0.65).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let vectors: Vec<Vec<f64>> = (0..512)
        .map(|_| (0..rng.random_range(1..64)).map(|_| rng.random::<f64>()).collect())
        .collect();
    let chunks: Vec<&[Vec<f64>]> = vectors.chunks(32).collect();

    let mut group = c.benchmark_group("score_512_vectors");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                map_slice(exec, &chunks, |chunk| {
                    let mut ws = Workspace::default();
                    chunk.iter().map(|v| eval.score(v, &mut ws).fitness).sum::<f64>()
                })
            })
        });
    }
    group.finish();
}

fn independent_runs(c: &mut Criterion) {
    let ds = dataset();
    let eval = Evaluator::new(&ds, &Model::Partial { s: 4 }, 0.65).unwrap();
    let cfg = GpConfig {
        population: 50,
        budget: 1_000,
        pirs: 8,
        ..GpConfig::default()
    };
    let seeds = cfg.run_seeds();

    let mut group = c.benchmark_group("gp_8_runs");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_pirs(&eval, &cfg, &seeds, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pn_table, batch_scoring, independent_runs);
criterion_main!(benches);
