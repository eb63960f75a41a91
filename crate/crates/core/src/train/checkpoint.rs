//! Single-file checkpoints: `GRAMNET1`, a little-endian `u64` manifest length,
//! a JSON manifest, then every tensor as contiguous little-endian `f32`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EpochLog, TrainConfig};
use crate::gram::{GramNet, GramNetConfig, ModelKind, NetError};

pub const MAGIC: &[u8; 8] = b"GRAMNET1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("malformed checkpoint manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("checkpoint does not match its config: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub seed: u64,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub history: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob.
    offset: usize,
    /// Element count.
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    kind: ModelKind,
    config: GramNetConfig,
    metadata: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

/// Model kind, architecture, every parameter and BN statistic, and training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: GramNetConfig,
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_model(net: &mut GramNet<f32>, meta: CheckpointMeta) -> Self {
        Self {
            kind: net.kind(),
            config: net.config().clone(),
            tensors: net.state(),
            meta,
        }
    }

    /// Rebuilds the network; the tensor set must match the config exactly.
    pub fn to_model(&self) -> Result<GramNet<f32>, CheckpointError> {
        let mismatch = |e: NetError| CheckpointError::Mismatch(e.to_string());
        let mut net = GramNet::<f32>::new(self.config.clone(), self.kind, 0).map_err(mismatch)?;
        let expected: HashSet<String> = net.state().into_iter().map(|t| t.0).collect();
        let mut seen = HashSet::new();
        for (name, shape, values) in &self.tensors {
            if !seen.insert(name.as_str()) {
                return Err(CheckpointError::Mismatch(format!("duplicate tensor '{name}'")));
            }
            net.set_tensor(name, shape, values).map_err(mismatch)?;
        }
        if let Some(missing) = expected.iter().find(|n| !seen.contains(n.as_str())) {
            return Err(CheckpointError::Mismatch(format!("missing tensor '{missing}'")));
        }
        Ok(net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let tensors = self
            .tensors
            .iter()
            .map(|(name, shape, values)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                    offset,
                    len: values.len(),
                };
                offset += 4 * values.len();
                e
            })
            .collect();
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            kind: self.kind,
            config: self.config.clone(),
            metadata: self.meta.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(16 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, values) in &self.tensors {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let json_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let json_end = usize::try_from(json_len)
            .ok()
            .and_then(|l| l.checked_add(16))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| CheckpointError::Corrupt("manifest length exceeds file".into()))?;
        let value: serde_json::Value = serde_json::from_slice(&bytes[16..json_end])?;
        let version = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != u64::from(FORMAT_VERSION) {
            return Err(CheckpointError::Version(version as u32));
        }
        let manifest: Manifest = serde_json::from_value(value)?;
        let blob = &bytes[json_end..];
        let expected: usize = manifest.tensors.iter().map(|t| 4 * t.len).sum();
        if blob.len() != expected {
            return Err(CheckpointError::Corrupt(format!(
                "blob has {} bytes, manifest describes {expected}",
                blob.len()
            )));
        }
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for t in manifest.tensors {
            if t.shape.iter().product::<usize>() != t.len {
                return Err(CheckpointError::Mismatch(format!(
                    "tensor '{}' shape {:?} does not hold {} values",
                    t.name, t.shape, t.len
                )));
            }
            let raw = t
                .offset
                .checked_add(4 * t.len)
                .and_then(|end| blob.get(t.offset..end))
                .ok_or_else(|| CheckpointError::Corrupt(format!("tensor '{}' lies outside the blob", t.name)))?;
            let values = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            tensors.push((t.name, t.shape, values));
        }
        let ckpt = Self {
            kind: manifest.kind,
            config: manifest.config,
            tensors,
            meta: manifest.metadata,
        };
        ckpt.to_model()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
