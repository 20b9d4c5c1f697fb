use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spurious_core::data::{rasterize, RasterConfig, StrokeRecord};
use spurious_core::harness::{load_checkpoint, save_checkpoint};
use spurious_core::metrics::{delta, objectness, spearman, ReconstructionOracle};
use spurious_core::nn::{channel_wta, spatial_wta, Autoencoder, ModelConfig};
use spurious_core::Tensor;

fn tensor(maps: usize, side: usize) -> impl Strategy<Value = Tensor<f32>> {
    prop::collection::vec(-1.0f32..1.0, maps * side * side)
        .prop_map(move |d| Tensor::new(vec![maps, side, side], d).unwrap())
}

fn small_model(layers: usize, maps: usize, rho: f64, seed: u64) -> Autoencoder<f32> {
    let cfg = ModelConfig::new(layers, maps, rho, 0.2, seed).with_hidden_maps(3);
    Autoencoder::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn images(n: usize, seed: u64) -> Vec<Tensor<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Tensor::image((0..784).map(|_| rand::Rng::random::<f32>(&mut rng)).collect()).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spatial_wta_keeps_one_max_per_map(t in (1usize..6, 1usize..8).prop_flat_map(|(c, s)| tensor(c, s))) {
        let (out, winners) = spatial_wta(&t).unwrap();
        let (c, h, w) = t.dims3().unwrap();
        for m in 0..c {
            let src = &t.data()[m * h * w..(m + 1) * h * w];
            let dst = &out.data()[m * h * w..(m + 1) * h * w];
            let max = src.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            prop_assert_eq!(src[winners[m]], max);
            let ok = dst.iter().enumerate().all(|(i, &v)| if i == winners[m] { v == max } else { v == 0.0 });
            prop_assert!(ok);
        }
    }

    #[test]
    fn channel_wta_drops_floor_rho_c(t in (1usize..20).prop_flat_map(|c| tensor(c, 3)), rho in 0.0f64..0.95) {
        let (out, survivors) = channel_wta(&t, rho).unwrap();
        let c = survivors.len();
        let keep = c - (rho * c as f64).floor() as usize;
        prop_assert_eq!(survivors.iter().filter(|&&s| s).count(), keep);
        let max = |m: usize| t.data()[m * 9..(m + 1) * 9].iter().copied().fold(f32::NEG_INFINITY, f32::max);
        for a in (0..c).filter(|&m| survivors[m]) {
            for b in (0..c).filter(|&m| !survivors[m]) {
                prop_assert!(max(a) >= max(b));
                prop_assert!(out.data()[b * 9..(b + 1) * 9].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn membership_grows_with_theta(seed in 0u64..1000, lo in 1.0f64..400.0, gap in 0.0f64..300.0) {
        let model = small_model(1, 2, 0.0, seed);
        let set = images(6, seed);
        let a = ReconstructionOracle::new(&model, lo).unwrap().membership_naive(&set).unwrap();
        let b = ReconstructionOracle::new(&model, lo + gap).unwrap().membership_naive(&set).unwrap();
        prop_assert!(a.members.iter().all(|i| b.members.contains(i)));
        prop_assert!(a.rate() <= b.rate());
    }

    #[test]
    fn delta_is_bounded(irr in 0.0f64..=1.0, orr in 0.0f64..=1.0) {
        let d = delta(irr, orr).unwrap();
        prop_assert!((-1.0..=1.0).contains(&d));
        prop_assert_eq!(d, irr - orr);
    }

    #[test]
    fn objectness_between_one_and_class_count(
        rows in prop::collection::vec(prop::collection::vec(0.001f64..1.0, 10), 2..40)
    ) {
        let probs: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let score = objectness(&probs).unwrap();
        prop_assert!((1.0 - 1e-9..=10.0 + 1e-9).contains(&score), "{}", score);
    }

    #[test]
    fn spearman_is_a_correlation(xs in prop::collection::vec(-10.0f64..10.0, 3..30), seed in 0u64..100) {
        let ys: Vec<f64> = xs.iter().map(|x| x * x + seed as f64).collect();
        if let Some(r) = spearman(&xs, &ys) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
        let same = spearman(&xs, &xs);
        if let Some(r) = same {
            prop_assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(layers in 1usize..4, maps in 1usize..5, rho in 0.0f64..0.9, seed in 0u64..1000) {
        let model = small_model(layers, maps, rho, seed);
        let bytes = save_checkpoint(&model).unwrap();
        let back = load_checkpoint(&bytes).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(save_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn rasterized_strokes_stay_in_unit_range(
        strokes in prop::collection::vec(prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..8), 1..4)
    ) {
        let rec = StrokeRecord {
            class_label: "s".into(),
            strokes: strokes.into_iter().map(|s| s.into_iter().map(|(x, y)| [x, y]).collect()).collect(),
        };
        let img = rasterize(&rec, &RasterConfig::default()).unwrap();
        prop_assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(img.data().iter().any(|&v| v > 0.0));
        prop_assert_eq!(rasterize(&rec, &RasterConfig::default()).unwrap(), img);
    }
}
