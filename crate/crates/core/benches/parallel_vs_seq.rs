//! Compares the rayon-backed map against the always-sequential fallback on
//! the two hot surfaces of a round: batch compression of user momenta and
//! full user-round computation (per-sample gradients + clipping + sketch).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedrobust::dp::{clip, DpConfig};
use fedrobust::par;
use fedrobust::rng::SeededRng;
use fedrobust::sketch::SketchMatrix;
use fedrobust::tensor::{per_sample_gradients, LabeledExample, ModelSpec, ModelVector};
use std::hint::black_box;

fn random_vectors(n: usize, d: usize) -> Vec<ModelVector> {
    let mut rng = SeededRng::new(99, 0);
    (0..n)
        .map(|_| ModelVector((0..d).map(|_| rng.standard_normal()).collect()))
        .collect()
}

fn bench_batch_compress(c: &mut Criterion) {
    let d = 4000;
    let sketch = SketchMatrix::new(d, 400, 10, 0).unwrap();
    let mut group = c.benchmark_group("batch_compress");
    for n in [16usize, 64] {
        let vectors = random_vectors(n, d);
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |bench, _| {
            bench.iter(|| {
                let out = par::map(vectors.clone(), |v| sketch.compress(&v));
                black_box(out)
            })
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |bench, _| {
            bench.iter(|| {
                let out = par::map_seq(vectors.clone(), |v| sketch.compress(&v));
                black_box(out)
            })
        });
    }
    group.finish();
}

fn bench_user_gradients(c: &mut Criterion) {
    let model = ModelSpec::logistic(64, 10);
    let d = model.parameter_count();
    let params = ModelVector::zeros(d);
    let mut rng = SeededRng::new(7, 0);
    let batch: Vec<LabeledExample> = (0..64)
        .map(|i| LabeledExample {
            features: (0..64).map(|_| rng.standard_normal()).collect(),
            label: i % 10,
        })
        .collect();
    let dp = DpConfig {
        clip_norm: 1.0,
        noise_scale: 0.0,
        batch_size: 64,
        dataset_size: 640,
    };
    let users: Vec<u64> = (0..16).collect();
    let work = |_: u64| {
        let grads = per_sample_gradients(&model, &params, &batch).unwrap();
        let mut mean = ModelVector::zeros(d);
        for g in &grads {
            mean.axpy(1.0 / grads.len() as f64, &clip(g, dp.clip_norm));
        }
        mean
    };

    let mut group = c.benchmark_group("user_round_gradients");
    group.bench_function("parallel", |bench| {
        bench.iter(|| black_box(par::map(users.clone(), work)))
    });
    group.bench_function("sequential", |bench| {
        bench.iter(|| black_box(par::map_seq(users.clone(), work)))
    });
    group.finish();
}

criterion_group!(benches, bench_batch_compress, bench_user_gradients);
criterion_main!(benches);
