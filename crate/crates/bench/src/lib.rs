//! Fixtures shared by the criterion benchmarks in `benches/`.

use spurious_core::data::StrokeRecord;
use spurious_core::Tensor;

/// A deterministic `[maps, side, side]` tensor with values in [0,1).
pub fn pattern(maps: usize, side: usize, phase: u32) -> Tensor<f32> {
    let data = (0..maps * side * side)
        .map(|i| ((i as u32).wrapping_mul(2_654_435_761).wrapping_add(phase) >> 8) as f32 / (1u32 << 24) as f32)
        .collect();
    Tensor::new(vec![maps, side, side], data).expect("shape matches length")
}

/// A closed five-point star.
pub fn star() -> StrokeRecord {
    let pts: Vec<[f64; 2]> = (0..=5)
        .map(|i| {
            let a = (i * 2 % 5) as f64 * std::f64::consts::TAU / 5.0;
            [a.sin(), -a.cos()]
        })
        .collect();
    StrokeRecord {
        class_label: "star".into(),
        strokes: vec![pts],
    }
}
