//! Denoising reconstruction training: corrupt, reconstruct, score against the
//! clean image, backpropagate, update.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{mse_grad, mse_loss};
use super::model::{Autoencoder, AutoencoderParams, ModelConfig};
use super::noise::salt_pepper;
use super::optim::{Optimizer, OptimizerKind};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// RNG stream ids carved out of a model seed.
pub(crate) const STREAM_INIT: u64 = 0;
pub(crate) const STREAM_TRAIN: u64 = 1;
pub(crate) const STREAM_GENERATE: u64 = 2;

pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingHyper {
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many epochs without improvement of the training loss;
    /// 0 disables early stopping.
    pub patience: usize,
    /// Relative improvement that resets the patience counter.
    pub min_rel_improvement: f64,
}

impl Default for TrainingHyper {
    fn default() -> Self {
        TrainingHyper {
            optimizer: OptimizerKind::default(),
            epochs: 30,
            batch_size: 128,
            patience: 5,
            min_rel_improvement: 1e-4,
        }
    }
}

/// Per-epoch progress report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Autoencoder<f32>,
    /// Mean training loss of every completed epoch.
    pub history: Vec<f64>,
    pub stopped_early: bool,
}

fn optimizer_for<T: Scalar>(kind: OptimizerKind, params: &AutoencoderParams<T>) -> Optimizer<T> {
    let sizes: Vec<usize> = params.tensors().iter().map(|(_, _, d)| d.len()).collect();
    Optimizer::new(kind, &sizes)
}

/// Gradient of the mean batch MSE, without touching the parameters.
pub fn batch_gradient<T: Scalar, R: Rng + ?Sized>(
    model: &Autoencoder<T>,
    batch: &[&Tensor<T>],
    rng: &mut R,
) -> Result<(f64, AutoencoderParams<T>)> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = AutoencoderParams::zeros(&model.config);
    let mut loss = 0.0;
    for clean in batch {
        let noisy = salt_pepper(clean, model.config.p_corruption, rng);
        let fwd = model.forward(&noisy, None)?;
        loss += mse_loss(&fwd.output, clean)? * scale;
        let g = mse_grad(&fwd.output, clean, scale)?;
        model.backward(&fwd, &g, &mut grads)?;
    }
    Ok((loss, grads))
}

/// One optimizer update on a batch of clean images; returns the batch loss
/// measured before the update.
pub fn train_step<T: Scalar, R: Rng + ?Sized>(
    model: &mut Autoencoder<T>,
    optimizer: &mut Optimizer<T>,
    batch: &[&Tensor<T>],
    rng: &mut R,
) -> Result<f64> {
    let (loss, grads) = batch_gradient(model, batch, rng)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "training loss {loss} at optimizer step {}",
            optimizer.steps() + 1
        )));
    }
    let g: Vec<&[T]> = grads.tensors().into_iter().map(|(_, _, d)| d).collect();
    optimizer.step(model.params.tensors_mut(), g)?;
    Ok(loss)
}

/// Stateful trainer owning one model, its optimizer moments and its RNG.
#[derive(Clone, Debug)]
pub struct Trainer<T = f32> {
    pub model: Autoencoder<T>,
    optimizer: Optimizer<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Trainer<T> {
    /// Initializes parameters from `config.seed`.
    pub fn new(config: ModelConfig, optimizer: OptimizerKind) -> Result<Self> {
        let mut rng = seeded(config.seed, STREAM_INIT);
        let model = Autoencoder::init(config, &mut rng)?;
        Ok(Self::from_model(model, optimizer))
    }

    pub fn from_model(model: Autoencoder<T>, optimizer: OptimizerKind) -> Self {
        let optimizer = optimizer_for(optimizer, &model.params);
        let rng = seeded(model.config.seed, STREAM_TRAIN);
        Trainer {
            model,
            optimizer,
            rng,
        }
    }

    pub fn train_step(&mut self, batch: &[&Tensor<T>]) -> Result<f64> {
        train_step(&mut self.model, &mut self.optimizer, batch, &mut self.rng)
    }

    /// One pass over `data` in a freshly shuffled order.
    pub fn run_epoch(&mut self, data: &[Tensor<T>], batch_size: usize) -> Result<f64> {
        if data.is_empty() || batch_size == 0 {
            return Err(Error::Invalid("training needs data and a positive batch size".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Tensor<T>> = chunk.iter().map(|&i| &data[i]).collect();
            total += self.train_step(&batch)? * chunk.len() as f64;
        }
        Ok(total / data.len() as f64)
    }
}

/// Trains a fresh model for `cfg` on clean images, with early stopping on
/// stagnating training loss.
pub fn train_autoencoder(
    cfg: ModelConfig,
    data: &[Tensor<f32>],
    hyper: &TrainingHyper,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg, hyper.optimizer)?;
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 0..hyper.epochs {
        let mean_loss = trainer
            .run_epoch(data, hyper.batch_size)
            .map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}: {m}")),
                other => other,
            })?;
        history.push(mean_loss);
        progress(&EpochStats { epoch, mean_loss });
        if mean_loss < best * (1.0 - hyper.min_rel_improvement) {
            best = mean_loss;
            stale = 0;
        } else {
            stale += 1;
            if hyper.patience > 0 && stale >= hyper.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: trainer.model,
        history,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::blob_image;

    fn small_config(seed: u64) -> ModelConfig {
        ModelConfig::new(1, 4, 0.0, 0.0, seed).with_hidden_maps(4)
    }

    fn image(seed: u64) -> Tensor<f32> {
        blob_image(seed).cast()
    }

    #[test]
    fn zero_rate_leaves_params_and_reports_plain_mse() {
        let mut trainer = Trainer::<f32>::new(small_config(3), OptimizerKind::Sgd { lr: 0.0 }).unwrap();
        let before = trainer.model.params.clone();
        let img = image(3);
        let expected = mse_loss(&trainer.model.reconstruct(&img).unwrap(), &img).unwrap();
        let loss = trainer.train_step(&[&img]).unwrap();
        assert_eq!(trainer.model.params, before);
        assert_eq!(loss, expected);
    }

    #[test]
    fn single_image_loss_decreases_for_most_inits() {
        let img = image(7);
        let trials = 20;
        let mut monotone = 0;
        for seed in 0..trials {
            let mut trainer = Trainer::<f32>::new(small_config(seed), OptimizerKind::adam(1e-3)).unwrap();
            let losses: Vec<f64> = (0..50).map(|_| trainer.train_step(&[&img]).unwrap()).collect();
            if losses.windows(2).all(|w| w[1] <= w[0]) {
                monotone += 1;
            }
        }
        assert!(monotone * 10 >= trials * 9, "{monotone}/{trials} monotone runs");
    }

    #[test]
    fn identical_seeds_give_identical_parameters() {
        let data: Vec<Tensor<f32>> = (0..6).map(image).collect();
        let cfg = ModelConfig::new(1, 4, 0.5, 0.3, 9).with_hidden_maps(4);
        let run = || {
            let mut t = Trainer::<f32>::new(cfg.clone(), OptimizerKind::default()).unwrap();
            t.run_epoch(&data, 4).unwrap();
            t.run_epoch(&data, 4).unwrap();
            t.model.params
        };
        let (a, b) = (run(), run());
        let bits = |p: &AutoencoderParams<f32>| -> Vec<u32> {
            p.tensors().iter().flat_map(|(_, _, d)| d.iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn early_stopping_trims_history() {
        let data: Vec<Tensor<f32>> = (0..4).map(image).collect();
        let hyper = TrainingHyper {
            optimizer: OptimizerKind::Sgd { lr: 0.0 },
            epochs: 20,
            batch_size: 2,
            patience: 2,
            min_rel_improvement: 1e-4,
        };
        let mut seen = 0;
        let out = train_autoencoder(small_config(1), &data, &hyper, |_| seen += 1).unwrap();
        assert!(out.stopped_early);
        assert_eq!(out.history.len(), 3);
        assert_eq!(seen, 3);
    }
}
