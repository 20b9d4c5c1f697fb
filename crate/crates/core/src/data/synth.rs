//! Procedural handwritten-symbol corpus.
//!
//! Each class is a stroke template in a unit box (x right, y down). Samples
//! apply a random affine distortion, per-stroke drift and per-point jitter,
//! so no two records of a class coincide. No template is a digit.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::stroke::StrokeRecord;

type Strokes = Vec<Vec<[f64; 2]>>;

fn line(a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    (0..=6)
        .map(|i| {
            let t = i as f64 / 6.0;
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        })
        .collect()
}

fn poly(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = vec![points[0]];
    for w in points.windows(2) {
        out.extend(line(w[0], w[1]).into_iter().skip(1));
    }
    out
}

/// Elliptic arc from angle `t0` to `t1` (radians, y down so positive angles
/// turn clockwise on screen).
fn arc(c: [f64; 2], r: [f64; 2], t0: f64, t1: f64) -> Vec<[f64; 2]> {
    let n = (((t1 - t0).abs() / (PI / 12.0)).ceil() as usize).max(4);
    (0..=n)
        .map(|i| {
            let t = t0 + (t1 - t0) * i as f64 / n as f64;
            [c[0] + r[0] * t.cos(), c[1] + r[1] * t.sin()]
        })
        .collect()
}

fn dot(p: [f64; 2]) -> Vec<[f64; 2]> {
    vec![p]
}

fn wave(y: f64, amp: f64) -> Vec<[f64; 2]> {
    (0..=16)
        .map(|i| {
            let t = i as f64 / 16.0;
            [0.1 + 0.8 * t, y - amp * (2.0 * PI * t).sin()]
        })
        .collect()
}

fn template(name: &str) -> Strokes {
    match name {
        "+" => vec![line([0.1, 0.5], [0.9, 0.5]), line([0.5, 0.1], [0.5, 0.9])],
        "-" => vec![line([0.1, 0.5], [0.9, 0.5])],
        "=" => vec![line([0.1, 0.35], [0.9, 0.35]), line([0.1, 0.65], [0.9, 0.65])],
        "\\times" => vec![line([0.15, 0.15], [0.85, 0.85]), line([0.85, 0.15], [0.15, 0.85])],
        "\\div" => vec![line([0.1, 0.5], [0.9, 0.5]), dot([0.5, 0.2]), dot([0.5, 0.8])],
        "<" => vec![poly(&[[0.85, 0.1], [0.15, 0.5], [0.85, 0.9]])],
        ">" => vec![poly(&[[0.15, 0.1], [0.85, 0.5], [0.15, 0.9]])],
        "\\leq" => vec![
            poly(&[[0.85, 0.05], [0.15, 0.35], [0.85, 0.65]]),
            line([0.15, 0.9], [0.85, 0.9]),
        ],
        "\\geq" => vec![
            poly(&[[0.15, 0.05], [0.85, 0.35], [0.15, 0.65]]),
            line([0.15, 0.9], [0.85, 0.9]),
        ],
        "\\neq" => vec![
            line([0.1, 0.35], [0.9, 0.35]),
            line([0.1, 0.65], [0.9, 0.65]),
            line([0.7, 0.05], [0.3, 0.95]),
        ],
        "\\pm" => vec![
            line([0.1, 0.4], [0.9, 0.4]),
            line([0.5, 0.05], [0.5, 0.75]),
            line([0.1, 0.9], [0.9, 0.9]),
        ],
        "\\rightarrow" => vec![line([0.05, 0.5], [0.95, 0.5]), poly(&[[0.7, 0.3], [0.95, 0.5], [0.7, 0.7]])],
        "\\leftarrow" => vec![line([0.95, 0.5], [0.05, 0.5]), poly(&[[0.3, 0.3], [0.05, 0.5], [0.3, 0.7]])],
        "(" => vec![arc([0.9, 0.5], [0.5, 0.5], PI * 0.65, PI * 1.35)],
        ")" => vec![arc([0.1, 0.5], [0.5, 0.5], -PI * 0.35, PI * 0.35)],
        "[" => vec![poly(&[[0.7, 0.05], [0.3, 0.05], [0.3, 0.95], [0.7, 0.95]])],
        "]" => vec![poly(&[[0.3, 0.05], [0.7, 0.05], [0.7, 0.95], [0.3, 0.95]])],
        "|" => vec![line([0.5, 0.05], [0.5, 0.95])],
        "/" => vec![line([0.8, 0.05], [0.2, 0.95])],
        "\\backslash" => vec![line([0.2, 0.05], [0.8, 0.95])],
        "\\sqrt{}" => vec![poly(&[[0.05, 0.6], [0.2, 0.5], [0.35, 0.95], [0.6, 0.05], [0.95, 0.05]])],
        "\\int" => vec![{
            let mut s = arc([0.65, 0.12], [0.12, 0.1], 0.0, -PI);
            s.reverse();
            s.extend(line([0.53, 0.15], [0.47, 0.85]));
            s.extend(arc([0.35, 0.88], [0.12, 0.1], 0.0, PI));
            s
        }],
        "\\sum" => vec![poly(&[[0.85, 0.1], [0.15, 0.1], [0.55, 0.5], [0.15, 0.9], [0.85, 0.9]])],
        "\\pi" => vec![
            line([0.1, 0.25], [0.9, 0.25]),
            line([0.35, 0.25], [0.3, 0.9]),
            poly(&[[0.65, 0.25], [0.65, 0.85], [0.75, 0.9]]),
        ],
        "\\alpha" => vec![{
            let mut s = arc([0.4, 0.5], [0.3, 0.3], -PI * 0.1, PI * 1.9);
            s.extend(line([0.68, 0.42], [0.9, 0.85]));
            s
        }],
        "\\infty" => vec![(0..=40)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 40.0;
                let d = 1.0 + t.sin().powi(2);
                [0.5 + 0.45 * t.cos() / d, 0.5 + 0.45 * t.sin() * t.cos() / d]
            })
            .collect()],
        "\\Delta" => vec![poly(&[[0.5, 0.05], [0.1, 0.9], [0.9, 0.9], [0.5, 0.05]])],
        "\\nabla" => vec![poly(&[[0.1, 0.1], [0.9, 0.1], [0.5, 0.95], [0.1, 0.1]])],
        "\\square" => vec![poly(&[[0.15, 0.15], [0.85, 0.15], [0.85, 0.85], [0.15, 0.85], [0.15, 0.15]])],
        "\\circ" => vec![arc([0.5, 0.5], [0.4, 0.4], 0.0, 2.0 * PI)],
        "\\exists" => vec![poly(&[[0.15, 0.1], [0.85, 0.1], [0.85, 0.9], [0.15, 0.9]]), line([0.3, 0.5], [0.85, 0.5])],
        "\\forall" => vec![poly(&[[0.1, 0.1], [0.5, 0.9], [0.9, 0.1]]), line([0.3, 0.5], [0.7, 0.5])],
        "\\cup" => vec![{
            let mut s = line([0.15, 0.1], [0.15, 0.5]);
            s.extend(arc([0.5, 0.5], [0.35, 0.4], PI, 0.0));
            s.extend(line([0.85, 0.5], [0.85, 0.1]));
            s
        }],
        "\\cap" => vec![{
            let mut s = line([0.15, 0.9], [0.15, 0.5]);
            s.extend(arc([0.5, 0.5], [0.35, 0.4], PI, 2.0 * PI));
            s.extend(line([0.85, 0.5], [0.85, 0.9]));
            s
        }],
        "\\sim" => vec![wave(0.5, 0.15)],
        "\\approx" => vec![wave(0.35, 0.1), wave(0.65, 0.1)],
        "\\star" => vec![poly(&[
            [0.5, 0.05],
            [0.75, 0.9],
            [0.05, 0.35],
            [0.95, 0.35],
            [0.25, 0.9],
            [0.5, 0.05],
        ])],
        "x" => vec![line([0.2, 0.3], [0.8, 0.9]), line([0.8, 0.3], [0.2, 0.9])],
        "y" => vec![line([0.2, 0.3], [0.5, 0.65]), line([0.8, 0.3], [0.3, 1.0])],
        "z" => vec![poly(&[[0.2, 0.3], [0.8, 0.3], [0.2, 0.9], [0.8, 0.9]])],
        "k" => vec![line([0.25, 0.05], [0.25, 0.95]), poly(&[[0.75, 0.35], [0.3, 0.65], [0.8, 0.95]])],
        "A" => vec![poly(&[[0.1, 0.95], [0.5, 0.05], [0.9, 0.95]]), line([0.3, 0.6], [0.7, 0.6])],
        "H" => vec![
            line([0.2, 0.05], [0.2, 0.95]),
            line([0.8, 0.05], [0.8, 0.95]),
            line([0.2, 0.5], [0.8, 0.5]),
        ],
        "M" => vec![poly(&[[0.1, 0.95], [0.15, 0.05], [0.5, 0.6], [0.85, 0.05], [0.9, 0.95]])],
        "N" => vec![poly(&[[0.15, 0.95], [0.15, 0.05], [0.85, 0.95], [0.85, 0.05]])],
        "T" => vec![line([0.1, 0.1], [0.9, 0.1]), line([0.5, 0.1], [0.5, 0.95])],
        "\\lambda" => vec![line([0.2, 0.05], [0.85, 0.95]), line([0.5, 0.45], [0.15, 0.95])],
        "\\mu" => vec![{
            let mut s = line([0.2, 1.0], [0.2, 0.3]);
            s.extend(line([0.2, 0.3], [0.2, 0.6]));
            s.extend(arc([0.45, 0.6], [0.25, 0.3], PI, 0.0));
            s.extend(line([0.7, 0.6], [0.7, 0.3]));
            s.extend(line([0.7, 0.3], [0.8, 0.9]));
            s
        }],
        "e" => vec![{
            let mut s = line([0.15, 0.55], [0.85, 0.55]);
            s.extend(arc([0.5, 0.55], [0.35, 0.4], 0.0, -PI * 1.7));
            s
        }],
        "c" => vec![arc([0.55, 0.5], [0.4, 0.4], -PI * 0.25, -PI * 1.75)],
        _ => Vec::new(),
    }
}

/// Class names the generator knows, in a fixed order.
pub const SYMBOL_CLASSES: &[&str] = &[
    "+", "-", "=", "\\times", "\\div", "<", ">", "\\leq", "\\geq", "\\neq", "\\pm", "\\rightarrow",
    "\\leftarrow", "(", ")", "[", "]", "|", "/", "\\backslash", "\\sqrt{}", "\\int", "\\sum",
    "\\pi", "\\alpha", "\\infty", "\\Delta", "\\nabla", "\\square", "\\circ", "\\exists",
    "\\forall", "\\cup", "\\cap", "\\sim", "\\approx", "\\star", "x", "y", "z", "k", "A", "H",
    "M", "N", "T", "\\lambda", "\\mu", "e", "c",
];

/// One distorted sample of `class`, or `None` for an unknown class.
pub fn sample_symbol<R: Rng + ?Sized>(class: &str, rng: &mut R) -> Option<StrokeRecord> {
    let strokes = template(class);
    if strokes.is_empty() {
        return None;
    }
    let rot = rng.random_range(-0.2..0.2f64);
    let shear = rng.random_range(-0.2..0.2f64);
    let (sx, sy) = (rng.random_range(0.8..1.2f64), rng.random_range(0.8..1.2f64));
    let (c, s) = (rot.cos(), rot.sin());
    let jitter = Normal::new(0.0, 0.012).expect("valid sigma");
    let drift = Normal::new(0.0, 0.03).expect("valid sigma");
    let strokes = strokes
        .into_iter()
        .map(|stroke| {
            let (dx, dy) = (drift.sample(rng), drift.sample(rng));
            stroke
                .into_iter()
                .map(|[x, y]| {
                    let (x, y) = ((x - 0.5 + shear * (y - 0.5)) * sx, (y - 0.5) * sy);
                    [
                        c * x - s * y + dx + jitter.sample(rng),
                        s * x + c * y + dy + jitter.sample(rng),
                    ]
                })
                .collect()
        })
        .collect();
    Some(StrokeRecord {
        class_label: class.to_string(),
        strokes,
    })
}

/// `per_class[i]` samples of `SYMBOL_CLASSES[i]`, interleaved by class,
/// deterministic in `seed`.
pub fn synthetic_corpus(per_class: &[usize], seed: u64) -> Vec<StrokeRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class.iter().sum());
    let rounds = per_class.iter().copied().max().unwrap_or(0);
    for round in 0..rounds {
        for (class, &n) in SYMBOL_CLASSES.iter().zip(per_class) {
            if round < n {
                out.push(sample_symbol(class, &mut rng).expect("known class"));
            }
        }
    }
    out
}

/// `n` samples for every known class.
pub fn uniform_corpus(n: usize, seed: u64) -> Vec<StrokeRecord> {
    synthetic_corpus(&vec![n; SYMBOL_CLASSES.len()], seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{rasterize, RasterConfig};

    #[test]
    fn every_class_has_a_template() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for c in SYMBOL_CLASSES {
            let r = sample_symbol(c, &mut rng).unwrap_or_else(|| panic!("{c}"));
            r.validate().unwrap();
            let img = rasterize(&r, &RasterConfig::default()).unwrap();
            assert!(img.data().iter().filter(|&&v| v > 0.5).count() >= 10, "{c}");
        }
        assert!(sample_symbol("7", &mut rng).is_none());
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let a = synthetic_corpus(&[3, 0, 5], 9);
        assert_eq!(a.len(), 8);
        assert_eq!(a.iter().filter(|r| r.class_label == "=").count(), 5);
        assert_eq!(a, synthetic_corpus(&[3, 0, 5], 9));
        assert_ne!(a, synthetic_corpus(&[3, 0, 5], 10));
    }
}
