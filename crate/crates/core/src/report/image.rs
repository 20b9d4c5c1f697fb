//! 8-bit grayscale image grids.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Tensor, IMAGE_SIDE};

const GAP: usize = 2;
/// Background between cells.
const GUTTER: f32 = 0.25;

/// A grayscale raster with values in [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl GrayImage {
    pub fn filled(width: usize, height: usize, v: f32) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![v; width * height],
        }
    }

    /// Linear map of [0,1] onto 0..=255.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    fn blit(&mut self, x0: usize, y0: usize, img: &Tensor<f32>) {
        for y in 0..IMAGE_SIDE {
            for x in 0..IMAGE_SIDE {
                self.pixels[(y0 + y) * self.width + x0 + x] = img.data()[y * IMAGE_SIDE + x];
            }
        }
    }

    /// Mid-gray cell crossed by two dark diagonals: marks a row with no
    /// content.
    fn blank_cell(&mut self, x0: usize, y0: usize) {
        for y in 0..IMAGE_SIDE {
            for x in 0..IMAGE_SIDE {
                let on_diag = x == y || x + y == IMAGE_SIDE - 1;
                self.pixels[(y0 + y) * self.width + x0 + x] = if on_diag { 0.0 } else { 0.5 };
            }
        }
    }
}

/// One row of cells; `None` marks an empty row.
pub type GridRow<'a> = Option<Vec<&'a Tensor<f32>>>;

/// Lays 28×28 cells out row by row with a gutter between them. Rows may
/// differ in length; the grid is as wide as the longest row, and an empty
/// row is drawn as a single marked cell.
pub fn compose_grid(rows: &[GridRow<'_>]) -> GrayImage {
    let cols = rows
        .iter()
        .map(|r| r.as_ref().map_or(1, |c| c.len().max(1)))
        .max()
        .unwrap_or(1);
    let step = IMAGE_SIDE + GAP;
    let mut out = GrayImage::filled(GAP + cols * step, GAP + rows.len().max(1) * step, GUTTER);
    for (r, row) in rows.iter().enumerate() {
        let y0 = GAP + r * step;
        match row {
            Some(cells) if !cells.is_empty() => {
                for (c, img) in cells.iter().enumerate() {
                    out.blit(GAP + c * step, y0, img);
                }
            }
            _ => out.blank_cell(GAP, y0),
        }
    }
    out
}

pub fn write_png(path: &Path, img: &GrayImage) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(f), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
    w.write_image_data(&img.to_bytes())
        .map_err(|e| Error::Png(e.to_string()))?;
    w.finish().map_err(|e| Error::Png(e.to_string()))
}

/// Binary PGM (P5), for viewers without PNG support.
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    bytes.extend(img.to_bytes());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry_and_png_round_trip() {
        let a = Tensor::full(&[1, 28, 28], 1.0f32);
        let b = Tensor::zeros(&[1, 28, 28]);
        let g = compose_grid(&[Some(vec![&a, &b, &a]), None]);
        assert_eq!(g.width, 2 + 3 * 30);
        assert_eq!(g.height, 2 + 2 * 30);
        assert_eq!(g.pixels[2 * g.width + 2], 1.0);
        assert_eq!(g.pixels[2 * g.width + 32], 0.0);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        write_png(&p, &g).unwrap();
        let dec = png::Decoder::new(std::io::BufReader::new(fs::File::open(&p).unwrap()));
        let mut reader = dec.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width as usize, info.height as usize), (g.width, g.height));
        assert_eq!(&buf[..info.buffer_size()], &g.to_bytes()[..]);

        let q = dir.path().join("g.pgm");
        write_pgm(&q, &g).unwrap();
        assert!(fs::read(&q).unwrap().starts_with(b"P5\n92 62\n255\n"));
    }
}
