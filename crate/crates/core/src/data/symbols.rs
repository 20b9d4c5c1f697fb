use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::raster::{rasterize, RasterConfig};
use super::stroke::StrokeRecord;
use super::LabeledImageSet;
use crate::error::{Error, Result};

/// Classes with fewer records than this are dropped.
pub const MIN_CLASS_COUNT: usize = 100;

#[derive(Clone, Debug)]
pub struct SymbolSplit {
    pub train: LabeledImageSet,
    pub test: LabeledImageSet,
    /// Surviving class names; label `i` refers to `classes[i]`.
    pub classes: Vec<String>,
    /// Indices into the input records, in split order.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl SymbolSplit {
    pub fn total(&self) -> usize {
        self.train.len() + self.test.len()
    }
}

pub fn class_counts(records: &[StrokeRecord]) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.class_label.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Drops small classes, rasterizes the rest, shuffles with `seed` and cuts
/// the first `n_train` records off as the training set.
pub fn build_symbol_datasets(
    records: &[StrokeRecord],
    min_count: usize,
    n_train: usize,
    seed: u64,
    raster: &RasterConfig,
) -> Result<SymbolSplit> {
    if records.is_empty() {
        return Err(Error::Dataset("no stroke records".into()));
    }
    let counts = class_counts(records);
    let classes: Vec<String> = counts
        .iter()
        .filter(|(_, &n)| n >= min_count)
        .map(|(c, _)| c.to_string())
        .collect();
    let label_of: BTreeMap<&str, u32> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i as u32))
        .collect();
    let mut kept: Vec<usize> = (0..records.len())
        .filter(|&i| label_of.contains_key(records[i].class_label.as_str()))
        .collect();
    if kept.len() < n_train {
        return Err(Error::Dataset(format!(
            "{} records survive the {min_count}-per-class filter, fewer than the {n_train} requested for training",
            kept.len()
        )));
    }
    kept.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_indices = kept.split_off(n_train);
    let train_indices = kept;

    let build = |name: &str, idx: &[usize]| -> Result<LabeledImageSet> {
        let mut images = Vec::with_capacity(idx.len());
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            images.push(rasterize(&records[i], raster)?);
            labels.push(label_of[records[i].class_label.as_str()]);
        }
        Ok(LabeledImageSet::new(name, images, labels)?.with_class_names(classes.clone()))
    };
    Ok(SymbolSplit {
        train: build("symbols-train", &train_indices)?,
        test: build("symbols-test", &test_indices)?,
        classes,
        train_indices,
        test_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(sizes: &[(&str, usize)]) -> Vec<StrokeRecord> {
        sizes
            .iter()
            .flat_map(|&(c, n)| {
                (0..n).map(move |i| StrokeRecord {
                    class_label: c.to_string(),
                    strokes: vec![vec![[0.0, 0.0], [1.0, (i % 7) as f64]]],
                })
            })
            .collect()
    }

    #[test]
    fn threshold_drops_small_class() {
        let recs = corpus(&[("a", 150), ("b", 99), ("c", 200)]);
        let s = build_symbol_datasets(&recs, 100, 100, 1, &RasterConfig::default()).unwrap();
        assert_eq!(s.classes, vec!["a", "c"]);
        assert_eq!(s.total(), 350);
        assert_eq!(s.test.len(), 250);
    }

    #[test]
    fn split_is_seeded_partition() {
        let recs = corpus(&[("a", 120), ("b", 130)]);
        let cfg = RasterConfig::default();
        let s1 = build_symbol_datasets(&recs, 100, 60, 4, &cfg).unwrap();
        let s2 = build_symbol_datasets(&recs, 100, 60, 4, &cfg).unwrap();
        assert_eq!(s1.train_indices, s2.train_indices);
        assert_eq!(s1.train, s2.train);
        let mut all: Vec<usize> = s1.train_indices.iter().chain(&s1.test_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..250).collect::<Vec<_>>());
        let s3 = build_symbol_datasets(&recs, 100, 60, 5, &cfg).unwrap();
        assert_ne!(s1.train_indices, s3.train_indices);
    }

    #[test]
    fn too_few_survivors() {
        let recs = corpus(&[("a", 120)]);
        assert!(build_symbol_datasets(&recs, 100, 121, 0, &RasterConfig::default()).is_err());
    }
}
