//! Stroke rendering onto an MNIST-style canvas.

use serde::{Deserialize, Serialize};

use super::stroke::StrokeRecord;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterConfig {
    pub canvas: usize,
    /// Side of the box the inked symbol (brush included) is scaled into.
    pub content_side: usize,
    pub brush_radius: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            canvas: 28,
            content_side: 20,
            brush_radius: 1.0,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.content_side >= self.canvas {
            return Err(Error::Config(format!(
                "content side {} must be below canvas {}",
                self.content_side, self.canvas
            )));
        }
        if self.brush_radius.is_nan() || self.brush_radius <= 0.0 || 2.0 * self.brush_radius + 1.0 >= self.content_side as f64 {
            return Err(Error::Config(format!(
                "brush radius {} does not fit content side {}",
                self.brush_radius, self.content_side
            )));
        }
        Ok(())
    }

    /// Length, in pixels, that the longer bounding-box side of the stroke
    /// centerlines is scaled to. Adding the brush on both ends makes the
    /// lit extent equal to `content_side`.
    pub fn centerline_span(&self) -> f64 {
        self.content_side as f64 - 2.0 * self.brush_radius - 1.0
    }
}

/// Uniform scale and translation from source units to pixel centers.
struct Placement {
    scale: f64,
    mid: f64,
    center: [f64; 2],
}

impl Placement {
    fn new(rec: &StrokeRecord, cfg: &RasterConfig) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for [x, y] in rec.points() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let extent = (x1 - x0).max(y1 - y0);
        Placement {
            scale: if extent > 0.0 { cfg.centerline_span() / extent } else { 0.0 },
            mid: (cfg.canvas as f64 - 1.0) / 2.0,
            center: [(x0 + x1) / 2.0, (y0 + y1) / 2.0],
        }
    }

    fn map(&self, [x, y]: [f64; 2]) -> [f64; 2] {
        [
            self.mid + (x - self.center[0]) * self.scale,
            self.mid + (y - self.center[1]) * self.scale,
        ]
    }
}

struct Canvas {
    side: usize,
    radius: f64,
    px: Vec<f32>,
}

impl Canvas {
    fn coverage(&self, dist: f64) -> f32 {
        (self.radius + 0.5 - dist).clamp(0.0, 1.0) as f32
    }

    /// Stamps the segment a→b (pixel-center coordinates, x = column).
    fn segment(&mut self, a: [f64; 2], b: [f64; 2]) {
        let reach = self.radius + 0.5;
        let max = (self.side - 1) as f64;
        let lo = |u: f64, v: f64| (u.min(v) - reach).floor().clamp(0.0, max) as usize;
        let hi = |u: f64, v: f64| (u.max(v) + reach).ceil().clamp(0.0, max) as usize;
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dy * dy;
        for row in lo(a[1], b[1])..=hi(a[1], b[1]) {
            for col in lo(a[0], b[0])..=hi(a[0], b[0]) {
                let (px, py) = (col as f64, row as f64);
                let t = if len2 > 0.0 {
                    (((px - a[0]) * dx + (py - a[1]) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
                let dist = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
                let c = self.coverage(dist);
                let cell = &mut self.px[row * self.side + col];
                if c > *cell {
                    *cell = c;
                }
            }
        }
    }
}

/// Renders `rec` into a `1 × canvas × canvas` image with values in [0,1].
///
/// The bounding box of all points is scaled uniformly so its longer side
/// spans [`RasterConfig::centerline_span`] pixels, then centered. Segments
/// are drawn with an anti-aliased round brush, overlapping coverage
/// combined by maximum.
pub fn rasterize(rec: &StrokeRecord, cfg: &RasterConfig) -> Result<Tensor<f32>> {
    cfg.validate()?;
    rec.validate()
        .map_err(|m| Error::Invalid(format!("cannot rasterize '{}': {m}", rec.class_label)))?;
    let place = Placement::new(rec, cfg);
    let map = |p| place.map(p);

    let mut canvas = Canvas {
        side: cfg.canvas,
        radius: cfg.brush_radius,
        px: vec![0.0; cfg.canvas * cfg.canvas],
    };
    for stroke in &rec.strokes {
        let pts: Vec<[f64; 2]> = stroke.iter().map(|&p| map(p)).collect();
        if pts.len() == 1 {
            canvas.segment(pts[0], pts[0]);
        }
        for w in pts.windows(2) {
            canvas.segment(w[0], w[1]);
        }
    }
    Tensor::new(vec![1, cfg.canvas, cfg.canvas], canvas.px)
}

/// Pixel (row, col) that a source point lands on under the rasterizer's
/// mapping.
#[cfg(test)]
pub(crate) fn mapped_pixel(rec: &StrokeRecord, cfg: &RasterConfig, p: [f64; 2]) -> (usize, usize) {
    let [col, row] = Placement::new(rec, cfg).map(p);
    (row.round() as usize, col.round() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(strokes: Vec<Vec<[f64; 2]>>) -> StrokeRecord {
        StrokeRecord {
            class_label: "t".into(),
            strokes,
        }
    }

    fn at(img: &Tensor<f32>, r: usize, c: usize) -> f32 {
        img.data()[r * 28 + c]
    }

    #[test]
    fn horizontal_stroke_is_centered_bar() {
        let img = rasterize(&rec(vec![vec![[0.0, 0.0], [10.0, 0.0]]]), &RasterConfig::default()).unwrap();
        assert!(img.in_unit_range());
        for r in 0..28 {
            for c in 0..28 {
                if !(4..=23).contains(&r) || !(4..=23).contains(&c) {
                    assert_eq!(at(&img, r, c), 0.0, "border pixel ({r},{c})");
                }
            }
        }
        let lit: Vec<usize> = (0..28).filter(|&c| at(&img, 13, c) > 0.0).collect();
        assert_eq!(lit.len(), 20);
        assert_eq!((lit[0], lit[19]), (4, 23));
        assert_eq!(at(&img, 13, 10), 1.0);
        assert_eq!(at(&img, 14, 10), 1.0);
        assert_eq!(at(&img, 12, 10), 0.0);
    }

    #[test]
    fn single_point_is_centered_dot() {
        let img = rasterize(&rec(vec![vec![[3.0, -7.0]]]), &RasterConfig::default()).unwrap();
        let (mut sum, mut mr, mut mc) = (0.0, 0.0, 0.0);
        for r in 0..28 {
            for c in 0..28 {
                let v = f64::from(at(&img, r, c));
                sum += v;
                mr += v * r as f64;
                mc += v * c as f64;
            }
        }
        assert!(sum > 0.0);
        assert!((mr / sum - 14.0).abs() <= 0.5 && (mc / sum - 14.0).abs() <= 0.5);
    }

    #[test]
    fn empty_record_rejected() {
        assert!(rasterize(&rec(vec![]), &RasterConfig::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let r = rec(vec![vec![[0.0, 0.0], [1.0, 2.0], [3.0, 0.5]], vec![[2.0, 2.0]]]);
        let a = rasterize(&r, &RasterConfig::default()).unwrap();
        let b = rasterize(&r, &RasterConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_content_rejected() {
        let cfg = RasterConfig {
            content_side: 28,
            ..RasterConfig::default()
        };
        assert!(rasterize(&rec(vec![vec![[0.0, 0.0]]]), &cfg).is_err());
    }

    proptest! {
        #[test]
        fn vertices_are_inked(strokes in prop::collection::vec(
            prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..8), 1..4)
        ) {
            let r = rec(strokes.into_iter().map(|s| s.into_iter().map(|(x, y)| [x, y]).collect()).collect());
            let cfg = RasterConfig::default();
            let img = rasterize(&r, &cfg).unwrap();
            prop_assert!(img.in_unit_range());
            for p in r.points() {
                let (row, col) = mapped_pixel(&r, &cfg, p);
                prop_assert!(at(&img, row, col) >= 0.5, "vertex {p:?} at ({row},{col})");
            }
        }
    }
}
