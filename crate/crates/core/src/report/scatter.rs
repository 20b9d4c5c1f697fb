//! Per-model rows for the ORR-vs-IRR and objectness-vs-Δ scatter plots.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::write_atomic;
use crate::metrics::{EvalRecord, RecordStatus};

/// Flat CSV row; empty cells for metrics a failed model lacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub model_id: String,
    pub status: RecordStatus,
    #[serde(rename = "L")]
    pub layers: usize,
    pub bottleneck_maps: usize,
    pub hidden_maps: usize,
    pub rho: f64,
    pub p_corruption: f64,
    pub seed: u64,
    pub theta: f64,
    pub irr: Option<f64>,
    pub orr: Option<f64>,
    pub delta: Option<f64>,
    pub objectness: Option<f64>,
    pub symbol_as_digit_rate: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub digits_evaluated: usize,
    pub symbols_evaluated: usize,
    /// Per-epoch training losses joined by `;`.
    pub train_history: String,
    pub error: Option<String>,
}

impl From<&EvalRecord> for ScatterRow {
    fn from(r: &EvalRecord) -> Self {
        ScatterRow {
            model_id: r.model_id.clone(),
            status: r.status,
            layers: r.config.layers,
            bottleneck_maps: r.config.bottleneck_maps,
            hidden_maps: r.config.hidden_maps,
            rho: r.config.rho,
            p_corruption: r.config.p_corruption,
            seed: r.config.seed,
            theta: r.theta,
            irr: r.irr,
            orr: r.orr,
            delta: r.delta,
            objectness: r.objectness,
            symbol_as_digit_rate: r.symbol_as_digit_rate,
            final_train_loss: r.final_train_loss,
            digits_evaluated: r.digits_evaluated,
            symbols_evaluated: r.symbols_evaluated,
            train_history: r
                .train_history
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(";"),
            error: r.error.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub model_id: String,
    pub irr: f64,
    pub orr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectnessPoint {
    pub model_id: String,
    pub delta: f64,
    pub objectness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterJson {
    pub records: Vec<EvalRecord>,
    /// Points for ORR plotted against IRR.
    pub irr_vs_orr: Vec<RatePoint>,
    /// Points for objectness plotted against Δ.
    pub objectness_vs_delta: Vec<ObjectnessPoint>,
}

impl ScatterJson {
    pub fn new(records: &[EvalRecord]) -> Self {
        ScatterJson {
            records: records.to_vec(),
            irr_vs_orr: records
                .iter()
                .filter_map(|r| {
                    Some(RatePoint {
                        model_id: r.model_id.clone(),
                        irr: r.irr?,
                        orr: r.orr?,
                    })
                })
                .collect(),
            objectness_vs_delta: records
                .iter()
                .filter_map(|r| {
                    Some(ObjectnessPoint {
                        model_id: r.model_id.clone(),
                        delta: r.delta?,
                        objectness: r.objectness?,
                    })
                })
                .collect(),
        }
    }
}

pub fn scatter_csv(records: &[EvalRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(ScatterRow::from(r))?;
    }
    w.into_inner().map_err(|e| Error::Invalid(e.to_string()))
}

pub fn parse_scatter_csv(bytes: &[u8]) -> Result<Vec<ScatterRow>> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(Error::from)
}

/// Writes `scatter.csv` and `scatter.json` into `dir`.
pub fn emit_scatter(records: &[EvalRecord], dir: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Invalid("no records to plot".into()));
    }
    write_atomic(&dir.join("scatter.csv"), &scatter_csv(records)?)?;
    write_atomic(
        &dir.join("scatter.json"),
        &serde_json::to_vec_pretty(&ScatterJson::new(records))?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;

    fn record(i: usize, failed: bool) -> EvalRecord {
        let cfg = ModelConfig::new(1 + i % 3, 8, 0.1 * i as f64, 0.3, i as u64 * 7919);
        if failed {
            return EvalRecord::failed(cfg, 50.0, vec![0.25, 0.2], "diverged".into());
        }
        let irr = 1.0 / (i as f64 + 1.3);
        let orr = irr / 3.0;
        EvalRecord {
            model_id: cfg.model_id(),
            config: cfg,
            status: RecordStatus::Done,
            theta: 50.0,
            irr: Some(irr),
            orr: Some(orr),
            delta: Some(irr - orr),
            objectness: Some(1.0 + 0.1 / 3.0 * i as f64),
            symbol_as_digit_rate: if i.is_multiple_of(2) { Some(0.1 / 7.0) } else { None },
            final_train_loss: Some(0.0123456789),
            digits_evaluated: 2000,
            symbols_evaluated: 2000,
            train_history: vec![0.1, 0.05, 0.0123456789],
            error: None,
        }
    }

    #[test]
    fn one_row_per_record_including_failures() {
        let recs: Vec<EvalRecord> = (0..187).map(|i| record(i, i % 17 == 3)).collect();
        let rows = parse_scatter_csv(&scatter_csv(&recs).unwrap()).unwrap();
        assert_eq!(rows.len(), 187);
        let failed = rows.iter().filter(|r| r.status == RecordStatus::Failed).count();
        assert_eq!(failed, recs.iter().filter(|r| !r.is_done()).count());
        assert!(rows.iter().filter(|r| r.status == RecordStatus::Failed).all(|r| r.irr.is_none()));
    }

    #[test]
    fn csv_values_match_json_exactly() {
        let recs: Vec<EvalRecord> = (0..20).map(|i| record(i, i == 5)).collect();
        let rows = parse_scatter_csv(&scatter_csv(&recs).unwrap()).unwrap();
        let json: ScatterJson =
            serde_json::from_slice(&serde_json::to_vec(&ScatterJson::new(&recs)).unwrap()).unwrap();
        for (row, rec) in rows.iter().zip(&json.records) {
            assert_eq!(row, &ScatterRow::from(rec));
            assert_eq!(row.irr.map(f64::to_bits), rec.irr.map(f64::to_bits));
        }
        assert_eq!(json.irr_vs_orr.len(), 19);
    }

    #[test]
    fn empty_input_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_scatter(&[], dir.path()).is_err());
    }
}
