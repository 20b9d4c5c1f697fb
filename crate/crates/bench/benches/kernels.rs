use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spurious_bench::{pattern, star};
use spurious_core::data::{rasterize, RasterConfig};
use spurious_core::nn::{conv2d, Autoencoder, ConvLayer, ConvMode, ModelConfig, OptimizerKind, Trainer};

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = c.benchmark_group("conv2d");
    for (maps, mode, side) in [(16, ConvMode::Valid, 24), (16, ConvMode::Full, 20), (128, ConvMode::Valid, 24)] {
        let layer = ConvLayer::<f32>::init_uniform(maps, maps, 5, mode, 6.0, &mut rng);
        let x = pattern(maps, side, 1);
        g.bench_function(format!("{maps}x{maps} {mode:?} {side}px"), |b| {
            b.iter(|| conv2d(black_box(&x), &layer).unwrap())
        });
    }
    g.finish();
}

fn model(c: &mut Criterion) {
    let img = pattern(1, 28, 7);
    let mut g = c.benchmark_group("autoencoder");
    for layers in [1, 2, 3] {
        let cfg = ModelConfig::new(layers, 16, 0.5, 0.2, 3).with_hidden_maps(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Autoencoder::<f32>::init(cfg.clone(), &mut rng).unwrap();
        g.bench_function(format!("forward L{layers} h16"), |b| b.iter(|| m.reconstruct(black_box(&img)).unwrap()));

        let mut t = Trainer::<f32>::new(cfg, OptimizerKind::default()).unwrap();
        let batch: Vec<_> = (0..32).map(|i| pattern(1, 28, i)).collect();
        let refs: Vec<_> = batch.iter().collect();
        g.bench_function(format!("train_step L{layers} h16 batch32"), |b| {
            b.iter(|| t.train_step(black_box(&refs)).unwrap())
        });
    }
    g.finish();
}

fn raster(c: &mut Criterion) {
    let rec = star();
    let cfg = RasterConfig::default();
    c.bench_function("rasterize star", |b| b.iter(|| rasterize(black_box(&rec), &cfg).unwrap()));
}

criterion_group!(benches, conv, model, raster);
criterion_main!(benches);
