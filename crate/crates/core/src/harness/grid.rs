use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::model::{PAPER_HIDDEN_MAPS, PAPER_KERNEL};
use crate::nn::ModelConfig;

/// Number of models trained in the original sweep.
pub const PAPER_SAMPLE_COUNT: usize = 187;

/// Axes of the hyperparameter grid plus optional seeded subsampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub layers: Vec<usize>,
    pub bottleneck_maps: Vec<usize>,
    pub rho: Vec<f64>,
    pub p_corruption: Vec<f64>,
    #[serde(default = "default_hidden")]
    pub hidden_maps: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default)]
    pub sample_count: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_hidden() -> usize {
    PAPER_HIDDEN_MAPS
}

fn default_kernel() -> usize {
    PAPER_KERNEL
}

impl GridSpec {
    /// The full 6 × 7 × 7 × 6 sweep.
    pub fn paper() -> Self {
        GridSpec {
            layers: (1..=6).collect(),
            bottleneck_maps: vec![2, 4, 8, 16, 32, 64, 128],
            rho: vec![0.0, 0.1, 0.2, 0.4, 0.5, 0.7, 0.9],
            p_corruption: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            hidden_maps: PAPER_HIDDEN_MAPS,
            kernel: PAPER_KERNEL,
            sample_count: None,
            master_seed: 0,
        }
    }

    /// The paper grid subsampled to the size of the original sweep.
    pub fn paper_sample(master_seed: u64) -> Self {
        GridSpec {
            sample_count: Some(PAPER_SAMPLE_COUNT),
            master_seed,
            ..GridSpec::paper()
        }
    }

    pub fn full_size(&self) -> usize {
        self.layers.len() * self.bottleneck_maps.len() * self.rho.len() * self.p_corruption.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.full_size() == 0 {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        if let Some(n) = self.sample_count {
            if n == 0 || n > self.full_size() {
                return Err(Error::Config(format!(
                    "sample count {n} outside 1..={}",
                    self.full_size()
                )));
            }
        }
        Ok(())
    }
}

/// Seed of one model: the first 8 bytes of SHA-256 over the master seed and
/// the seedless config, so a config's seed does not depend on which other
/// configs are in the grid.
pub fn model_seed(master_seed: u64, config: &ModelConfig) -> u64 {
    let seedless = ModelConfig {
        seed: 0,
        ..config.clone()
    };
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(serde_json::to_vec(&seedless).expect("config serializes"));
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Cartesian product in lexicographic (layers, bottleneck, rho, p) order,
/// optionally reduced to a seeded uniform subsample that keeps this order.
pub fn enumerate_grid(spec: &GridSpec) -> Result<Vec<ModelConfig>> {
    spec.validate()?;
    let mut all = Vec::with_capacity(spec.full_size());
    for &layers in &spec.layers {
        for &b in &spec.bottleneck_maps {
            for &rho in &spec.rho {
                for &p in &spec.p_corruption {
                    let mut cfg = ModelConfig::new(layers, b, rho, p, 0).with_hidden_maps(spec.hidden_maps);
                    cfg.kernel = spec.kernel;
                    cfg.validate()?;
                    cfg.seed = model_seed(spec.master_seed, &cfg);
                    all.push(cfg);
                }
            }
        }
    }
    Ok(match spec.sample_count {
        Some(n) if n < all.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.master_seed);
            let mut picked = sample(&mut rng, all.len(), n).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| all[i].clone()).collect()
        }
        _ => all,
    })
}
