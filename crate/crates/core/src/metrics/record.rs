use serde::{Deserialize, Serialize};

use crate::nn::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Done,
    Failed,
}

/// Everything measured for one model. Metric fields are empty for failed
/// models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model_id: String,
    pub config: ModelConfig,
    pub status: RecordStatus,
    pub theta: f64,
    pub irr: Option<f64>,
    pub orr: Option<f64>,
    pub delta: Option<f64>,
    pub objectness: Option<f64>,
    pub symbol_as_digit_rate: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub digits_evaluated: usize,
    pub symbols_evaluated: usize,
    pub train_history: Vec<f64>,
    pub error: Option<String>,
}

impl EvalRecord {
    pub fn failed(config: ModelConfig, theta: f64, history: Vec<f64>, error: String) -> Self {
        EvalRecord {
            model_id: config.model_id(),
            config,
            status: RecordStatus::Failed,
            theta,
            irr: None,
            orr: None,
            delta: None,
            objectness: None,
            symbol_as_digit_rate: None,
            final_train_loss: history.last().copied(),
            digits_evaluated: 0,
            symbols_evaluated: 0,
            train_history: history,
            error: Some(error),
        }
    }

    pub fn is_done(&self) -> bool {
        self.status == RecordStatus::Done
    }
}
