use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::{read_checkpoint_header, read_file, write_atomic};
use crate::error::{Error, Result};
use crate::nn::ModelConfig;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryStatus {
    Pending,
    Training,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub model_id: String,
    pub config: ModelConfig,
    pub config_hash: String,
    pub status: EntryStatus,
    /// Paths relative to the run directory.
    pub checkpoint: Option<String>,
    pub record: Option<String>,
    pub error: Option<String>,
}

impl ManifestEntry {
    fn pending(config: &ModelConfig) -> Self {
        ManifestEntry {
            model_id: config.model_id(),
            config: config.clone(),
            config_hash: config.hash_hex(),
            status: EntryStatus::Pending,
            checkpoint: None,
            record: None,
            error: None,
        }
    }

    fn reset(&mut self) {
        self.status = EntryStatus::Pending;
        self.checkpoint = None;
        self.record = None;
        self.error = None;
    }
}

/// Status of every config of a run, in grid order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StatusCounts {
    pub pending: usize,
    pub training: usize,
    pub done: usize,
    pub failed: usize,
}

impl RunManifest {
    pub fn new(configs: &[ModelConfig]) -> Self {
        RunManifest {
            version: MANIFEST_VERSION,
            entries: configs.iter().map(ManifestEntry::pending).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: RunManifest = serde_json::from_slice(&read_file(path)?)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "{}: manifest version {} is not supported",
                path.display(),
                m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec_pretty(self)?)
    }

    pub fn counts(&self) -> StatusCounts {
        let mut c = StatusCounts::default();
        for e in &self.entries {
            match e.status {
                EntryStatus::Pending => c.pending += 1,
                EntryStatus::Training => c.training += 1,
                EntryStatus::Done => c.done += 1,
                EntryStatus::Failed => c.failed += 1,
            }
        }
        c
    }

    pub fn entry_mut(&mut self, model_id: &str) -> Option<&mut ManifestEntry> {
        self.entries.iter_mut().find(|e| e.model_id == model_id)
    }

    pub fn entry(&self, model_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.model_id == model_id)
    }

    /// Brings the manifest in line with `configs` and the files on disk:
    /// unknown configs are appended as pending, interrupted entries are
    /// reset, and a done entry whose checkpoint or record is missing or
    /// whose checkpoint belongs to another config is reset. Returns the
    /// number of entries that were reset.
    pub fn reconcile(&mut self, configs: &[ModelConfig], run_dir: &Path) -> usize {
        for c in configs {
            if self.entry(&c.model_id()).is_none() {
                self.entries.push(ManifestEntry::pending(c));
            }
        }
        let mut reset = 0;
        for e in &mut self.entries {
            let ok = match e.status {
                EntryStatus::Pending => true,
                EntryStatus::Training => false,
                EntryStatus::Failed => e.record.as_ref().is_some_and(|r| run_dir.join(r).is_file()),
                EntryStatus::Done => {
                    let ckpt_ok = e.checkpoint.as_ref().is_some_and(|c| {
                        read_file(&run_dir.join(c))
                            .and_then(|b| read_checkpoint_header(&b))
                            .is_ok_and(|h| h.config_hash == e.config_hash)
                    });
                    ckpt_ok && e.record.as_ref().is_some_and(|r| run_dir.join(r).is_file())
                }
            };
            if !ok {
                log::warn!("{}: {:?} entry is stale, retraining", e.model_id, e.status);
                e.reset();
                reset += 1;
            }
        }
        reset
    }
}
