//! Qualitative panels: missed digits, accepted symbols and generation
//! trajectories, each written as a PNG plus a JSON sidecar.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::image::{compose_grid, write_png, GridRow};
use crate::error::{Error, Result};
use crate::generation::GenerationRun;
use crate::harness::write_atomic;
use crate::metrics::{Reconstruct, ReconstructionOracle};
use crate::nn::train::seeded;
use crate::tensor::Tensor;

const STREAM_PANEL: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelKind {
    /// Rejected digits and accepted symbols, each above its reconstructions.
    Membership,
    /// One generation trajectory per row, iterations left to right.
    Generation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub model_id: String,
    pub kind: PanelKind,
    /// Images per row for membership panels, trajectories for generation.
    pub per_row: usize,
    pub seed: u64,
}

impl PanelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.per_row == 0 {
            return Err(Error::Invalid("panel needs at least one image per row".into()));
        }
        Ok(())
    }

    pub fn file_stem(&self) -> String {
        let kind = match self.kind {
            PanelKind::Membership => "membership",
            PanelKind::Generation => "generation",
        };
        format!("{}-{kind}", self.model_id)
    }
}

/// Sidecar naming the source of every cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelSidecar {
    pub spec: PanelSpec,
    pub theta: Option<f64>,
    /// Test-set indices of the digits the oracle rejects.
    pub missed_digits: Vec<usize>,
    /// Test-set indices of the symbols the oracle accepts.
    pub accepted_symbols: Vec<usize>,
    /// Iteration index shown in each generation column.
    pub iterations: Vec<usize>,
    /// Generation seeds shown, one per row.
    pub trajectories: Vec<usize>,
    pub image: PathBuf,
}

fn row(cells: Vec<&Tensor<f32>>) -> GridRow<'_> {
    (!cells.is_empty()).then_some(cells)
}

/// Up to `k` of `pool`, sampled without replacement and kept in index order.
fn pick(pool: &[usize], k: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = seeded(seed, stream);
    let mut chosen: Vec<usize> = sample(&mut rng, pool.len(), k.min(pool.len()))
        .into_iter()
        .map(|i| pool[i])
        .collect();
    chosen.sort_unstable();
    chosen
}

/// Four rows: digits outside the model's set, their reconstructions, symbols
/// inside it, their reconstructions. An empty category yields a marked row.
pub fn membership_panel<M: Reconstruct>(
    oracle: &ReconstructionOracle<M>,
    digits: &[Tensor<f32>],
    symbols: &[Tensor<f32>],
    spec: &PanelSpec,
    dir: &Path,
) -> Result<PanelSidecar> {
    spec.validate()?;
    let missed = oracle.irr(digits)?.non_members;
    let accepted = oracle.orr(symbols)?.members;
    let missed = pick(&missed, spec.per_row, spec.seed, STREAM_PANEL);
    let accepted = pick(&accepted, spec.per_row, spec.seed, STREAM_PANEL + 1);

    let recon = |set: &[Tensor<f32>], idx: &[usize]| -> Result<Vec<Tensor<f32>>> {
        idx.iter().map(|&i| oracle.model.reconstruct(&set[i])).collect()
    };
    let missed_rec = recon(digits, &missed)?;
    let accepted_rec = recon(symbols, &accepted)?;
    let grid = compose_grid(&[
        row(missed.iter().map(|&i| &digits[i]).collect()),
        row(missed_rec.iter().collect()),
        row(accepted.iter().map(|&i| &symbols[i]).collect()),
        row(accepted_rec.iter().collect()),
    ]);
    finish(
        grid,
        PanelSidecar {
            spec: spec.clone(),
            theta: Some(oracle.theta()),
            missed_digits: missed,
            accepted_symbols: accepted,
            iterations: Vec::new(),
            trajectories: Vec::new(),
            image: PathBuf::new(),
        },
        dir,
    )
}

/// Column iterations: evenly spaced over `0..=n_iters`, at most `max_cols`,
/// always including both ends.
pub fn iteration_columns(n_iters: usize, max_cols: usize) -> Vec<usize> {
    if n_iters == 0 {
        return vec![0];
    }
    let cols = max_cols.clamp(2, n_iters + 1);
    let mut out: Vec<usize> = (0..cols)
        .map(|c| (c * n_iters + (cols - 1) / 2) / (cols - 1))
        .collect();
    out.dedup();
    out
}

pub fn generation_panel(run: &GenerationRun, spec: &PanelSpec, max_cols: usize, dir: &Path) -> Result<PanelSidecar> {
    spec.validate()?;
    if run.trajectories.is_empty() {
        return Err(Error::Invalid("generation run has no trajectories".into()));
    }
    let all: Vec<usize> = (0..run.trajectories.len()).collect();
    let rows = pick(&all, spec.per_row, spec.seed, STREAM_PANEL + 2);
    let iterations = iteration_columns(run.n_iters, max_cols);
    let grid = compose_grid(
        &rows
            .iter()
            .map(|&r| Some(iterations.iter().map(|&t| &run.trajectories[r][t]).collect()))
            .collect::<Vec<_>>(),
    );
    finish(
        grid,
        PanelSidecar {
            spec: spec.clone(),
            theta: None,
            missed_digits: Vec::new(),
            accepted_symbols: Vec::new(),
            iterations,
            trajectories: rows,
            image: PathBuf::new(),
        },
        dir,
    )
}

fn finish(grid: super::image::GrayImage, mut sidecar: PanelSidecar, dir: &Path) -> Result<PanelSidecar> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = sidecar.spec.file_stem();
    let png = dir.join(format!("{stem}.png"));
    write_png(&png, &grid)?;
    sidecar.image = png;
    write_atomic(&dir.join(format!("{stem}.json")), &serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(sidecar)
}
