//! Sampling by iterating a trained autoencoder from uniform noise until it
//! settles on an approximate fixed point.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Reconstruct;
use crate::nn::train::{seeded, STREAM_GENERATE};
use crate::tensor::{Tensor, IMAGE_PIXELS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub n_iters: usize,
    /// A seed stops once one application moves it by less than this L1 amount.
    pub early_stop_tol: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            n_iters: 50,
            early_stop_tol: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRun {
    pub n_iters: usize,
    /// `n_iters + 1` iterates per seed, the seed itself first.
    pub trajectories: Vec<Vec<Tensor<f32>>>,
    /// `‖M(x₀) − x₀‖₁` per seed.
    pub initial_residuals: Vec<f64>,
    /// `‖M(x_T) − x_T‖₁` per seed; `None` for seeds that produced a
    /// non-finite iterate.
    pub final_residuals: Vec<Option<f64>>,
    /// Iteration after which a seed stopped moving, if it did.
    pub converged_at: Vec<Option<usize>>,
}

impl GenerationRun {
    pub fn seeds(&self) -> impl Iterator<Item = &Tensor<f32>> {
        self.trajectories.iter().map(|t| &t[0])
    }

    /// Last iterate of every seed.
    pub fn finals(&self) -> Vec<Tensor<f32>> {
        self.trajectories.iter().map(|t| t[t.len() - 1].clone()).collect()
    }

    pub fn failed(&self) -> usize {
        self.final_residuals.iter().filter(|r| r.is_none()).count()
    }
}

/// `n` images with every pixel drawn uniformly from [0,1].
pub fn seed_images<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<Tensor<f32>>> {
    if n == 0 {
        return Err(Error::Invalid("at least one seed image is required".into()));
    }
    Ok((0..n)
        .map(|_| {
            let px = (0..IMAGE_PIXELS).map(|_| rng.random::<f32>()).collect();
            Tensor::image(px).expect("image-sized buffer")
        })
        .collect())
}

/// [`seed_images`] drawn from a dedicated stream of `seed`.
pub fn seeded_images(n: usize, seed: u64) -> Result<Vec<Tensor<f32>>> {
    seed_images(n, &mut seeded(seed, STREAM_GENERATE))
}

fn residual(model: &impl Reconstruct, x: &Tensor<f32>) -> Result<(Tensor<f32>, f64)> {
    let y = model.reconstruct(x)?;
    let d = y.l1_distance(x)?;
    Ok((y, d))
}

/// Applies `x ← M(x)` up to `n_iters` times per seed.
pub fn iterate(model: &impl Reconstruct, seeds: &[Tensor<f32>], cfg: &GenerationConfig) -> Result<GenerationRun> {
    if cfg.n_iters == 0 {
        return Err(Error::Invalid("n_iters must be at least 1".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Invalid("no seed images".into()));
    }
    let mut run = GenerationRun {
        n_iters: cfg.n_iters,
        trajectories: Vec::with_capacity(seeds.len()),
        initial_residuals: Vec::with_capacity(seeds.len()),
        final_residuals: Vec::with_capacity(seeds.len()),
        converged_at: Vec::with_capacity(seeds.len()),
    };
    for (s, seed) in seeds.iter().enumerate() {
        let mut traj = Vec::with_capacity(cfg.n_iters + 1);
        traj.push(seed.clone());
        let mut converged_at = None;
        let mut diverged = false;
        let mut initial = None;
        for t in 0..cfg.n_iters {
            let (next, moved) = residual(model, &traj[t])?;
            initial.get_or_insert(moved);
            if !next.all_finite() || !moved.is_finite() {
                log::warn!("seed {s}: non-finite iterate at step {}", t + 1);
                diverged = true;
                break;
            }
            traj.push(next);
            if moved < cfg.early_stop_tol {
                converged_at = Some(t + 1);
                break;
            }
        }
        let last = traj.last().expect("trajectory holds the seed").clone();
        traj.resize(cfg.n_iters + 1, last);
        let fin = if diverged {
            None
        } else {
            let (_, r) = residual(model, &traj[cfg.n_iters])?;
            r.is_finite().then_some(r)
        };
        run.initial_residuals.push(initial.expect("n_iters >= 1"));
        run.final_residuals.push(fin);
        run.converged_at.push(converged_at);
        run.trajectories.push(traj);
    }
    Ok(run)
}

/// Median of the finite values, `None` for an empty input.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ConstantMap, IdentityMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_seed_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let imgs = seed_images(1, &mut rng).unwrap();
        let mean = imgs[0].data().iter().map(|&v| f64::from(v)).sum::<f64>() / 784.0;
        assert!(mean > 0.45 && mean < 0.55, "{mean}");
        assert!(imgs[0].in_unit_range());
        assert!(seed_images(0, &mut rng).is_err());
        let again = seed_images(1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(imgs, again);
    }

    #[test]
    fn identity_is_constant_trajectory() {
        let seeds = seed_images(3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let run = iterate(&IdentityMap, &seeds, &GenerationConfig::default()).unwrap();
        for (traj, seed) in run.trajectories.iter().zip(&seeds) {
            assert_eq!(traj.len(), 51);
            assert!(traj.iter().all(|x| x == seed));
        }
        assert!(run.final_residuals.iter().all(|r| *r == Some(0.0)));
        assert!(run.converged_at.iter().all(|c| *c == Some(1)));
    }

    #[test]
    fn constant_map_converges_in_one_step() {
        let seeds = seed_images(2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let cfg = GenerationConfig {
            n_iters: 5,
            early_stop_tol: 0.1,
        };
        let run = iterate(&ConstantMap(0.25), &seeds, &cfg).unwrap();
        for (i, traj) in run.trajectories.iter().enumerate() {
            assert_eq!(traj.len(), 6);
            assert!(traj[1..].iter().all(|x| x.data().iter().all(|&v| v == 0.25)));
            assert_eq!(run.final_residuals[i], Some(0.0));
            assert_eq!(run.converged_at[i], Some(2));
        }
    }

    struct Exploding;

    impl Reconstruct for Exploding {
        fn reconstruct(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
            Ok(x.map(|_| f32::NAN))
        }
    }

    #[test]
    fn non_finite_seed_is_flagged() {
        let seeds = seed_images(2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let run = iterate(&Exploding, &seeds, &GenerationConfig::default()).unwrap();
        assert_eq!(run.failed(), 2);
        assert!(run.trajectories.iter().all(|t| t.len() == 51));
    }

    #[test]
    fn zero_iterations_rejected() {
        let seeds = seed_images(1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let cfg = GenerationConfig {
            n_iters: 0,
            early_stop_tol: 0.1,
        };
        assert!(iterate(&IdentityMap, &seeds, &cfg).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median([3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(std::iter::empty()), None);
    }
}
