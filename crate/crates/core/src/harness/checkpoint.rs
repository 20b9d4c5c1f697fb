//! Binary parameter files.
//!
//! Layout: 4-byte ASCII magic, little-endian `u32` version, little-endian
//! `u32` header length, a JSON header describing the tensors, then every
//! tensor as little-endian `f32` values in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Classifier, ClassifierHead};
use crate::nn::{Autoencoder, AutoencoderParams, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPAE";
pub const CLASSIFIER_MAGIC: &[u8; 4] = b"SPCL";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub config_hash: String,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ClassifierHeader {
    head: ClassifierHead,
    tensors: Vec<TensorEntry>,
}

fn encode(magic: &[u8; 4], header: &impl Serialize, tensors: &[(String, Vec<usize>, &[f32])]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let payload: usize = tensors.iter().map(|(_, _, d)| d.len() * 4).sum();
    let mut out = Vec::with_capacity(12 + json.len() + payload);
    out.extend_from_slice(magic);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (name, _, data) in tensors {
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("refusing to save {name}: contains {v}")));
        }
        for v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Splits a container into its JSON header and the raw payload.
fn decode<'a, H: for<'de> Deserialize<'de>>(magic: &[u8; 4], bytes: &'a [u8]) -> Result<(H, &'a [u8])> {
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| Error::Checkpoint(format!("truncated before byte {}", at + 4)))
    };
    match bytes.get(..4) {
        Some(m) if m == magic => {}
        Some(m) => {
            return Err(Error::Checkpoint(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )))
        }
        None => return Err(Error::Checkpoint("file shorter than the magic".into())),
    }
    let version = word(4)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let len = word(8)? as usize;
    let json = bytes
        .get(12..12 + len)
        .ok_or_else(|| Error::Checkpoint(format!("header of {len} bytes is truncated")))?;
    let header = serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    Ok((header, &bytes[12 + len..]))
}

fn split_payload(entries: &[TensorEntry], mut payload: &[u8]) -> Result<Vec<(Vec<usize>, Vec<f32>)>> {
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let n: usize = e.shape.iter().product();
        let bytes = payload.get(..n * 4).ok_or_else(|| {
            Error::Checkpoint(format!("payload ends inside tensor {} ({} floats)", e.name, n))
        })?;
        out.push((
            e.shape.clone(),
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect(),
        ));
        payload = &payload[n * 4..];
    }
    if !payload.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing payload bytes", payload.len())));
    }
    Ok(out)
}

fn entries(tensors: &[(String, Vec<usize>, &[f32])]) -> Vec<TensorEntry> {
    tensors
        .iter()
        .map(|(name, shape, _)| TensorEntry {
            name: name.clone(),
            shape: shape.clone(),
        })
        .collect()
}

pub fn save_checkpoint(model: &Autoencoder<f32>) -> Result<Vec<u8>> {
    let tensors = model.params.tensors();
    let header = CheckpointHeader {
        config: model.config.clone(),
        config_hash: model.config.hash_hex(),
        tensors: entries(&tensors),
    };
    encode(CHECKPOINT_MAGIC, &header, &tensors)
}

/// Parses only the header, e.g. to compare config hashes.
pub fn read_checkpoint_header(bytes: &[u8]) -> Result<CheckpointHeader> {
    decode(CHECKPOINT_MAGIC, bytes).map(|(h, _)| h)
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Autoencoder<f32>> {
    let (header, payload): (CheckpointHeader, _) = decode(CHECKPOINT_MAGIC, bytes)?;
    let config = header.config;
    if config.hash_hex() != header.config_hash {
        return Err(Error::Checkpoint(format!(
            "stored config hash {} does not match its config ({})",
            header.config_hash,
            config.hash_hex()
        )));
    }
    config.validate()?;
    let mut params = AutoencoderParams::<f32>::zeros(&config);
    let expected = entries(&params.tensors());
    if expected != header.tensors {
        return Err(Error::Checkpoint(format!(
            "tensor manifest does not match the architecture of {}",
            config.model_id()
        )));
    }
    let data = split_payload(&header.tensors, payload)?;
    for (slot, (_, values)) in params.tensors_mut().into_iter().zip(data) {
        slot.copy_from_slice(&values);
    }
    Autoencoder::new(config, params)
}

pub fn save_classifier(clf: &Classifier) -> Result<Vec<u8>> {
    let tensors = clf.tensors();
    let header = ClassifierHeader {
        head: clf.head,
        tensors: entries(&tensors),
    };
    encode(CLASSIFIER_MAGIC, &header, &tensors)
}

pub fn load_classifier(bytes: &[u8]) -> Result<Classifier> {
    let (header, payload): (ClassifierHeader, _) = decode(CLASSIFIER_MAGIC, bytes)?;
    let data = split_payload(&header.tensors, payload)?;
    Classifier::from_tensors(header.head, data)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reinterprets a parameter tensor list for bit comparisons.
pub fn parameter_bits(model: &Autoencoder<f32>) -> Vec<u32> {
    model
        .params
        .tensors()
        .iter()
        .flat_map(|(_, _, d)| d.iter().map(|v| v.to_bits()))
        .collect()
}
