use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::panels::{generation_panel, membership_panel, PanelKind, PanelSpec};
use super::scatter::emit_scatter;
use crate::error::{Error, Result};
use crate::generation::{iterate, seed_images};
use crate::harness::{Datasets, Runner};
use crate::metrics::{EvalRecord, ReconstructionOracle};
use crate::nn::train::{seeded, STREAM_GENERATE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Models with the largest Δ that get panels.
    pub top_models: usize,
    pub per_row: usize,
    /// Columns of the generation panels.
    pub max_iter_cols: usize,
    pub seed: u64,
    /// Oracle threshold for the membership panels; the run's when unset.
    pub theta: Option<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            top_models: 3,
            per_row: 8,
            max_iter_cols: 11,
            seed: 0,
            theta: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReportSummary {
    pub dir: PathBuf,
    pub records: Vec<EvalRecord>,
    pub panels: Vec<PathBuf>,
}

/// Done records ordered by decreasing Δ, ties broken by model id.
pub fn rank_by_delta(records: &[EvalRecord]) -> Vec<&EvalRecord> {
    let mut done: Vec<&EvalRecord> = records.iter().filter(|r| r.delta.is_some()).collect();
    done.sort_by(|a, b| {
        b.delta
            .partial_cmp(&a.delta)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    done
}

/// Writes scatter data for every record of the run, plus membership and
/// generation panels for the top models, into `<run>/report`.
pub fn write_run_report(runner: &Runner, data: Option<&Datasets>, opts: &ReportOptions) -> Result<ReportSummary> {
    let records = runner.records()?;
    if records.is_empty() {
        return Err(Error::Invalid(format!("{} has no finished models", runner.dir().display())));
    }
    let dir = runner.dir().join("report");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    emit_scatter(&records, &dir)?;

    let mut panels = Vec::new();
    let top = rank_by_delta(&records);
    if opts.top_models > 0 && !top.is_empty() {
        let loaded;
        let data = match data {
            Some(d) => d,
            None => {
                loaded = runner.datasets()?;
                &loaded
            }
        };
        let theta = opts.theta.unwrap_or(runner.config.theta);
        for rec in top.into_iter().take(opts.top_models) {
            let model = runner.load_model(&rec.model_id)?;
            let spec = |kind| PanelSpec {
                model_id: rec.model_id.clone(),
                kind,
                per_row: opts.per_row,
                seed: opts.seed,
            };
            let oracle = ReconstructionOracle::new(&model, theta)?;
            let m = membership_panel(
                &oracle,
                &data.digits_test.images,
                &data.symbols_test.images,
                &spec(PanelKind::Membership),
                &dir,
            )?;
            panels.push(m.image);
            let seeds = seed_images(opts.per_row, &mut seeded(model.config.seed, STREAM_GENERATE))?;
            let run = iterate(&model, &seeds, &runner.config.generation)?;
            let g = generation_panel(&run, &spec(PanelKind::Generation), opts.max_iter_cols, &dir)?;
            panels.push(g.image);
        }
    }
    Ok(ReportSummary { dir, records, panels })
}
