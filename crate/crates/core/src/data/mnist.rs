use std::path::{Path, PathBuf};

use super::idx::read_idx_set;
use super::LabeledImageSet;
use crate::error::{Error, Result};

pub const MNIST_TRAIN_LEN: usize = 60_000;
pub const MNIST_TEST_LEN: usize = 10_000;

/// Locations of the four canonical MNIST files.
#[derive(Clone, Debug)]
pub struct MnistPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistPaths {
    /// The standard file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        MnistPaths {
            train_images: d.join("train-images-idx3-ubyte"),
            train_labels: d.join("train-labels-idx1-ubyte"),
            test_images: d.join("t10k-images-idx3-ubyte"),
            test_labels: d.join("t10k-labels-idx1-ubyte"),
        }
    }
}

fn check(set: &LabeledImageSet, expected: usize) -> Result<()> {
    if set.len() != expected {
        return Err(Error::Dataset(format!(
            "{} holds {} items, expected {expected}",
            set.name,
            set.len()
        )));
    }
    if let Some((i, l)) = set.labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(Error::Dataset(format!("{} label {l} at index {i} is not a digit", set.name)));
    }
    Ok(())
}

/// Loads the training and test splits and checks their canonical sizes.
pub fn load_mnist(paths: &MnistPaths) -> Result<(LabeledImageSet, LabeledImageSet)> {
    let train = read_idx_set(&paths.train_images, &paths.train_labels, "mnist-train")?;
    check(&train, MNIST_TRAIN_LEN)?;
    let test = read_idx_set(&paths.test_images, &paths.test_labels, "mnist-test")?;
    check(&test, MNIST_TEST_LEN)?;
    Ok((train, test))
}
