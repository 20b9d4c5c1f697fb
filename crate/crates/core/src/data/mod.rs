//! Digit and symbol datasets: IDX containers, stroke records, rasterization
//! and the symbol train/test split.

mod idx;
mod mnist;
mod raster;
mod stroke;
mod symbols;
pub mod synth;

pub use idx::{
    labels_to_idx, images_to_idx, parse_idx, read_idx_set, write_idx_set, IdxPayload,
    IMAGE_MAGIC, LABEL_MAGIC,
};
pub use mnist::{load_mnist, MnistPaths, MNIST_TEST_LEN, MNIST_TRAIN_LEN};
pub use raster::{rasterize, RasterConfig};
pub use stroke::{convert_hwrt_csv, read_stroke_jsonl, write_stroke_jsonl, StrokeRecord};
pub use symbols::{build_symbol_datasets, class_counts, SymbolSplit, MIN_CLASS_COUNT};

use crate::error::{Error, Result};
use crate::tensor::{Tensor, IMAGE_SIDE};

/// Images of shape 1×28×28 with one integer label each.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImageSet {
    pub name: String,
    pub images: Vec<Tensor<f32>>,
    pub labels: Vec<u32>,
    /// Optional label → class name table (symbol sets).
    pub class_names: Vec<String>,
}

impl LabeledImageSet {
    pub fn new(name: impl Into<String>, images: Vec<Tensor<f32>>, labels: Vec<u32>) -> Result<Self> {
        let set = LabeledImageSet {
            name: name.into(),
            images,
            labels,
            class_names: Vec::new(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = names;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.labels.len() {
            return Err(Error::Dataset(format!(
                "{}: {} images but {} labels",
                self.name,
                self.images.len(),
                self.labels.len()
            )));
        }
        for (i, img) in self.images.iter().enumerate() {
            if img.shape() != [1, IMAGE_SIDE, IMAGE_SIDE] {
                return Err(Error::Dataset(format!(
                    "{}: image {i} has shape {:?}",
                    self.name,
                    img.shape()
                )));
            }
            if !img.in_unit_range() {
                return Err(Error::Dataset(format!(
                    "{}: image {i} has pixels outside [0,1]",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// First `n` items (or all of them when `n` exceeds the length).
    pub fn take(&self, n: usize) -> LabeledImageSet {
        let n = n.min(self.len());
        LabeledImageSet {
            name: self.name.clone(),
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            class_names: self.class_names.clone(),
        }
    }

    /// Items at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledImageSet {
        LabeledImageSet {
            name: self.name.clone(),
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn distinct_labels(&self) -> usize {
        let mut l = self.labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    }
}
