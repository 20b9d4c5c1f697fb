use std::thread;

use crate::error::{Error, Result};
use crate::nn::Autoencoder;
use crate::tensor::{Tensor, IMAGE_PIXELS, IMAGE_SIDE};

/// Threshold used throughout the experiments, in summed absolute pixel
/// error over one image.
pub const DEFAULT_THETA: f64 = 50.0;

/// Anything that maps an image to a reconstruction of the same shape.
pub trait Reconstruct: Sync {
    fn reconstruct(&self, x: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Reconstruct for Autoencoder<f32> {
    fn reconstruct(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        Autoencoder::reconstruct(self, x)
    }
}

impl<M: Reconstruct + ?Sized> Reconstruct for &M {
    fn reconstruct(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        (**self).reconstruct(x)
    }
}

/// `M(x) = x`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityMap;

impl Reconstruct for IdentityMap {
    fn reconstruct(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(x.clone())
    }
}

/// `M(x) = c` everywhere.
#[derive(Clone, Copy, Debug)]
pub struct ConstantMap(pub f32);

impl Reconstruct for ConstantMap {
    fn reconstruct(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(Tensor::full(x.shape(), self.0))
    }
}

/// Membership outcome for every item of a set, in input order.
#[derive(Clone, Debug, PartialEq)]
pub struct Membership {
    pub distances: Vec<f64>,
    pub members: Vec<usize>,
    pub non_members: Vec<usize>,
}

impl Membership {
    fn from_distances(distances: Vec<f64>, theta: f64) -> Self {
        let (members, non_members) = (0..distances.len()).partition(|&i| distances[i] < theta);
        Membership {
            distances,
            members,
            non_members,
        }
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    /// Fraction of members.
    pub fn rate(&self) -> f64 {
        self.members.len() as f64 / self.len() as f64
    }
}

/// A model together with an acceptance threshold: `x` is accepted when
/// `‖M(x) − x‖₁ < theta`.
#[derive(Clone, Debug)]
pub struct ReconstructionOracle<M> {
    pub model: M,
    theta: f64,
}

fn check_image(x: &Tensor<f32>) -> Result<()> {
    if x.shape() != [1, IMAGE_SIDE, IMAGE_SIDE] {
        return Err(Error::shape(&[1, IMAGE_SIDE, IMAGE_SIDE], x.shape()));
    }
    Ok(())
}

impl<M: Reconstruct> ReconstructionOracle<M> {
    pub fn new(model: M, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Invalid(format!("theta must be positive and finite, got {theta}")));
        }
        Ok(ReconstructionOracle { model, theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// The same model judged at another threshold.
    pub fn with_theta(&self, theta: f64) -> Result<ReconstructionOracle<&M>> {
        ReconstructionOracle::new(&self.model, theta)
    }

    pub fn distance(&self, x: &Tensor<f32>) -> Result<f64> {
        check_image(x)?;
        let recon = self.model.reconstruct(x)?;
        recon.l1_distance(x)
    }

    pub fn is_member(&self, x: &Tensor<f32>) -> Result<bool> {
        Ok(self.distance(x)? < self.theta)
    }

    /// Scores `set` on up to `workers` threads. Decisions do not depend on
    /// the worker count.
    pub fn membership_parallel(&self, set: &[Tensor<f32>], workers: usize) -> Result<Membership> {
        if set.is_empty() {
            return Err(Error::Dataset("membership of an empty set is undefined".into()));
        }
        let workers = workers.clamp(1, set.len());
        let chunk = set.len().div_ceil(workers);
        let parts: Vec<Result<Vec<f64>>> = if workers == 1 {
            vec![set.iter().map(|x| self.distance(x)).collect()]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = set
                    .chunks(chunk)
                    .map(|part| s.spawn(move || part.iter().map(|x| self.distance(x)).collect()))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("membership worker panicked"))
                    .collect()
            })
        };
        let mut distances = Vec::with_capacity(set.len());
        for p in parts {
            distances.extend(p?);
        }
        Ok(Membership::from_distances(distances, self.theta))
    }

    pub fn membership(&self, set: &[Tensor<f32>]) -> Result<Membership> {
        let workers = thread::available_parallelism().map_or(1, |n| n.get());
        self.membership_parallel(set, workers)
    }

    /// Reference path: one image at a time, distance summed pixel by pixel.
    pub fn membership_naive(&self, set: &[Tensor<f32>]) -> Result<Membership> {
        if set.is_empty() {
            return Err(Error::Dataset("membership of an empty set is undefined".into()));
        }
        let mut distances = Vec::with_capacity(set.len());
        for x in set {
            check_image(x)?;
            let r = self.model.reconstruct(x)?;
            let mut d = 0.0f64;
            for i in 0..IMAGE_PIXELS {
                d += (f64::from(r.data()[i]) - f64::from(x.data()[i])).abs();
            }
            distances.push(d);
        }
        Ok(Membership::from_distances(distances, self.theta))
    }

    /// In-class reconstruction rate over the digit test set.
    pub fn irr(&self, digits: &[Tensor<f32>]) -> Result<Membership> {
        self.membership(digits)
    }

    /// Out-of-class reconstruction rate over the symbol test set.
    pub fn orr(&self, symbols: &[Tensor<f32>]) -> Result<Membership> {
        self.membership(symbols)
    }
}

/// `irr − orr`.
pub fn delta(irr: f64, orr: f64) -> Result<f64> {
    for (name, v) in [("irr", irr), ("orr", orr)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Invalid(format!("{name} = {v} is not a rate")));
        }
    }
    Ok(irr - orr)
}
