use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use lipread_core::features::{compute_hog, fit_pca, HogConfig};
use lipread_core::net::LossPlacement;
use lipread_core::rng::Rng;
use lipread_core::{LstmNetwork, NetworkShape};

fn random_frames(len: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = Rng::new(seed);
    (0..len)
        .map(|_| (0..dim).map(|_| rng.normal() as f32).collect())
        .collect()
}

fn lstm(c: &mut Criterion) {
    let net = LstmNetwork::<f32>::init_uniform(NetworkShape::LIPREADER, 0.05, 1);
    let frames = random_frames(8, NetworkShape::LIPREADER.inputs, 2);
    let mut group = c.benchmark_group("lstm");
    group.bench_function("forward 8 frames", |b| {
        b.iter(|| net.forward(black_box(&frames)).unwrap())
    });
    let weights = LossPlacement::AllFrames.frame_weights::<f32>(frames.len());
    group.bench_function("forward+backward 8 frames", |b| {
        b.iter_batched_ref(
            || LstmNetwork::<f32>::zeros(NetworkShape::LIPREADER),
            |grads| {
                net.accumulate_gradients(black_box(&frames), 3, &weights, grads)
                    .unwrap()
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn hog(c: &mut Criterion) {
    let patch = random_frames(1, 1600, 3).pop().unwrap();
    let cfg = HogConfig::default();
    c.bench_function("hog 40x40 cell 8", |b| {
        b.iter(|| compute_hog(black_box(&patch), 40, 40, &cfg).unwrap())
    });
}

fn pca(c: &mut Criterion) {
    let rows: Vec<Vec<f64>> = random_frames(300, 1600, 4)
        .into_iter()
        .map(|r| r.into_iter().map(f64::from).collect())
        .collect();
    let model = fit_pca(&rows, 100).unwrap();
    c.bench_function("eigenlips projection k=100", |b| {
        b.iter(|| model.project(black_box(&rows[0])).unwrap())
    });
}

criterion_group!(benches, lstm, hog, pca);
criterion_main!(benches);
