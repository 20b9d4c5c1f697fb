//! Grid sweeps: enumerate configurations, train and evaluate each model,
//! persist checkpoints, records and a resumable manifest.

mod checkpoint;
mod experiment;
mod grid;
mod manifest;

pub use checkpoint::{
    load_checkpoint, load_classifier, parameter_bits, read_checkpoint_header, read_file, save_checkpoint,
    save_classifier, write_atomic, CheckpointHeader, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use experiment::{
    evaluate_model, prepare_symbols, run_experiment, Classifiers, DataSpec, Datasets, EvalContext,
    ExperimentConfig, ExperimentOutcome, RunOptions, RunSummary, Runner, SymbolSource,
};
pub use grid::{enumerate_grid, model_seed, GridSpec, PAPER_SAMPLE_COUNT};
pub use manifest::{EntryStatus, ManifestEntry, RunManifest, StatusCounts};
