//! Sparse convolutional autoencoders as reconstruction oracles.
//!
//! A trained autoencoder `M` accepts an image `x` when `||M(x) - x||_1 < theta`.
//! Comparing how many held-out digits a model accepts (in-class rate) with how
//! many out-of-domain symbols it also accepts (out-of-class rate) exposes the
//! trade-off between missing modes and spurious modes.

pub mod data;
pub mod error;
pub mod generation;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor, IMAGE_PIXELS, IMAGE_SIDE};
