//! The IDX container used by MNIST: a big-endian magic word whose last byte
//! is the dimension count, one big-endian `u32` per dimension, then unsigned
//! bytes in row-major order.

use std::fs;
use std::path::Path;

use super::LabeledImageSet;
use crate::error::{Error, Result};
use crate::tensor::{Tensor, IMAGE_PIXELS, IMAGE_SIDE};

/// Unsigned-byte payload with three dimensions.
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
/// Unsigned-byte payload with one dimension.
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IdxPayload {
    Images {
        count: usize,
        rows: usize,
        cols: usize,
        pixels: Vec<u8>,
    },
    Labels(Vec<u8>),
}

fn idx_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Idx {
        offset,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let word = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| idx_err(offset, format!("header truncated ({} bytes total)", bytes.len())))?;
    Ok(u32::from_be_bytes(word.try_into().expect("4-byte slice")))
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxPayload> {
    let magic = read_u32(bytes, 0)?;
    let ndims = match magic {
        IMAGE_MAGIC => 3,
        LABEL_MAGIC => 1,
        other => return Err(idx_err(0, format!("bad magic 0x{other:08x}"))),
    };
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        dims.push(read_u32(bytes, 4 + 4 * d)? as usize);
    }
    let header = 4 + 4 * ndims;
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| idx_err(4, format!("dimensions {dims:?} overflow")))?;
    let available = bytes.len() - header;
    if available < expected {
        return Err(idx_err(
            bytes.len(),
            format!("payload truncated: header promises {expected} bytes, found {available}"),
        ));
    }
    if available > expected {
        return Err(idx_err(
            header + expected,
            format!("{} trailing bytes after payload", available - expected),
        ));
    }
    let payload = bytes[header..].to_vec();
    Ok(match ndims {
        3 => IdxPayload::Images {
            count: dims[0],
            rows: dims[1],
            cols: dims[2],
            pixels: payload,
        },
        _ => IdxPayload::Labels(payload),
    })
}

fn pixel_to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Serializes 1×28×28 images, quantizing each pixel to the nearest of the
/// 256 byte levels.
pub fn images_to_idx(images: &[Tensor<f32>]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + images.len() * IMAGE_PIXELS);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    for img in images {
        if img.shape() != [1, IMAGE_SIDE, IMAGE_SIDE] {
            return Err(Error::shape(&[1, IMAGE_SIDE, IMAGE_SIDE], img.shape()));
        }
        out.extend(img.data().iter().map(|&v| pixel_to_byte(v)));
    }
    Ok(out)
}

pub fn labels_to_idx(labels: &[u32]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for (i, &l) in labels.iter().enumerate() {
        let b = u8::try_from(l)
            .map_err(|_| Error::Dataset(format!("label {l} at index {i} does not fit in a byte")))?;
        out.push(b);
    }
    Ok(out)
}

fn images_from_payload(payload: IdxPayload) -> Result<Vec<Tensor<f32>>> {
    match payload {
        IdxPayload::Images {
            count,
            rows,
            cols,
            pixels,
        } => {
            if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
                return Err(idx_err(8, format!("images are {rows}×{cols}, expected 28×28")));
            }
            Ok((0..count)
                .map(|i| {
                    let px = pixels[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]
                        .iter()
                        .map(|&b| f32::from(b) / 255.0)
                        .collect();
                    Tensor::image(px).expect("28×28 payload")
                })
                .collect())
        }
        IdxPayload::Labels(_) => Err(idx_err(0, "expected an image file, found labels")),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads a matching image/label file pair.
pub fn read_idx_set(images: &Path, labels: &Path, name: &str) -> Result<LabeledImageSet> {
    let imgs = images_from_payload(parse_idx(&read_bytes(images)?)?)
        .map_err(|e| Error::Dataset(format!("{}: {e}", images.display())))?;
    let labs = match parse_idx(&read_bytes(labels)?)
        .map_err(|e| Error::Dataset(format!("{}: {e}", labels.display())))?
    {
        IdxPayload::Labels(l) => l,
        IdxPayload::Images { .. } => {
            return Err(Error::Dataset(format!(
                "{}: expected labels, found images",
                labels.display()
            )))
        }
    };
    if imgs.len() != labs.len() {
        return Err(Error::Dataset(format!(
            "{} holds {} images but {} holds {} labels",
            images.display(),
            imgs.len(),
            labels.display(),
            labs.len()
        )));
    }
    LabeledImageSet::new(name, imgs, labs.into_iter().map(u32::from).collect())
}

pub fn write_idx_set(set: &LabeledImageSet, images: &Path, labels: &Path) -> Result<()> {
    let imgs = images_to_idx(&set.images)?;
    let labs = labels_to_idx(&set.labels)?;
    fs::write(images, imgs).map_err(|e| Error::io(images, e))?;
    fs::write(labels, labs).map_err(|e| Error::io(labels, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn two_images_from_header_arithmetic() {
        let mut bytes = header(IMAGE_MAGIC, &[2, 28, 28]);
        bytes.extend(std::iter::repeat_n(7u8, 1568));
        let imgs = images_from_payload(parse_idx(&bytes).unwrap()).unwrap();
        assert_eq!(imgs.len(), 2);
    }

    #[test]
    fn byte_extremes_scale_to_unit_interval() {
        let mut bytes = header(IMAGE_MAGIC, &[1, 28, 28]);
        let mut px = vec![0u8; IMAGE_PIXELS];
        px[0] = 255;
        bytes.extend(px);
        let img = &images_from_payload(parse_idx(&bytes).unwrap()).unwrap()[0];
        assert_eq!(img.data()[0], 1.0);
        assert_eq!(img.data()[1], 0.0);
    }

    #[test]
    fn every_byte_level_survives_quantization() {
        for b in 0..=255u8 {
            assert_eq!(pixel_to_byte(f32::from(b) / 255.0), b);
        }
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let bytes = header(0x0000_0802, &[1]);
        match parse_idx(&bytes) {
            Err(Error::Idx { offset: 0, message }) => assert!(message.contains("0x00000802")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_payload_names_end_offset() {
        let mut bytes = header(LABEL_MAGIC, &[10]);
        bytes.extend([1, 2, 3]);
        match parse_idx(&bytes) {
            Err(Error::Idx { offset: 11, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_header() {
        let bytes = header(IMAGE_MAGIC, &[3, 28]);
        assert!(matches!(parse_idx(&bytes), Err(Error::Idx { offset: 12, .. })));
    }

    #[test]
    fn dimension_overflow_is_rejected() {
        let bytes = header(IMAGE_MAGIC, &[u32::MAX, u32::MAX, u32::MAX]);
        let err = parse_idx(&bytes).unwrap_err();
        assert!(err.to_string().contains("overflow") || err.to_string().contains("truncated"));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = header(LABEL_MAGIC, &[1]);
        bytes.extend([4, 4]);
        assert!(matches!(parse_idx(&bytes), Err(Error::Idx { offset: 9, .. })));
    }

    #[test]
    fn label_overflow_rejected() {
        assert!(labels_to_idx(&[300]).is_err());
    }
}
