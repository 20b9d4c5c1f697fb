//! Minimal neural-network kernel for the autoencoder family: convolutions,
//! activations, winner-take-all sparsity, corruption, loss, optimizers and a
//! finite-difference gradient checker.

pub mod activation;
pub mod conv;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod noise;
pub mod optim;
pub mod train;

pub use activation::{channel_wta, relu, sigmoid, spatial_wta};
pub use conv::{conv2d, sparse_full_conv, ConvLayer, ConvMode, SparseUnit};
pub use gradcheck::{grad_check, gradcheck_suite, GradCheckCase, GradCheckOptions, GradCheckReport};
pub use loss::mse_loss;
pub use model::{Autoencoder, AutoencoderParams, BottleneckSelection, Forward, ModelConfig};
pub use noise::salt_pepper;
pub use optim::{Optimizer, OptimizerKind};
pub use train::{train_autoencoder, train_step, EpochStats, TrainOutcome, Trainer, TrainingHyper};
