use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Parameters, Tensor};
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    CnnGru,
    EGraphsage,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::CnnGru => "cnn_gru",
            ModelKind::EGraphsage => "e_graphsage",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub round: usize,
    pub seed: u64,
    #[serde(default)]
    pub metrics_history: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub model_kind: ModelKind,
    pub architecture: serde_json::Value,
    pub layers: Vec<LayerRecord>,
    pub metadata: CheckpointMetadata,
}

/// Models with a fixed, declared architecture that can be saved and restored.
pub trait Checkpointable: Parameters + Sized {
    const KIND: ModelKind;

    fn architecture(&self) -> serde_json::Value;

    /// A model with the given architecture and placeholder weights.
    fn from_architecture(arch: &serde_json::Value) -> Result<Self>;

    fn to_checkpoint(&self, metadata: CheckpointMetadata) -> ModelCheckpoint {
        ModelCheckpoint {
            format_version: ModelCheckpoint::VERSION,
            model_kind: Self::KIND,
            architecture: self.architecture(),
            layers: layer_records(self),
            metadata,
        }
    }

    fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        if ckpt.format_version != ModelCheckpoint::VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (expected {})",
                ckpt.format_version,
                ModelCheckpoint::VERSION
            )));
        }
        if ckpt.model_kind != Self::KIND {
            return Err(Error::ModelKind { expected: Self::KIND.to_string(), found: ckpt.model_kind.to_string() });
        }
        let mut model = Self::from_architecture(&ckpt.architecture)?;
        model.load_layers(&ckpt.layers)?;
        Ok(model)
    }

    /// Overwrite every tensor from `layers`, which must match names and shapes exactly.
    fn load_layers(&mut self, layers: &[LayerRecord]) -> Result<()> {
        let mut tensors = self.tensors_mut();
        if tensors.len() != layers.len() {
            return Err(Error::Checkpoint(format!("expected {} layers, found {}", tensors.len(), layers.len())));
        }
        for ((name, t), rec) in tensors.iter_mut().zip(layers) {
            if *name != rec.name {
                return Err(Error::Checkpoint(format!("expected layer '{name}', found '{}'", rec.name)));
            }
            if t.shape() != rec.shape.as_slice() || rec.data.len() != t.len() {
                return Err(Error::Checkpoint(format!(
                    "layer '{name}': expected shape {:?}, found {:?} with {} values",
                    t.shape(),
                    rec.shape,
                    rec.data.len()
                )));
            }
            t.data_mut().copy_from_slice(&rec.data);
        }
        Ok(())
    }
}

pub fn layer_records<M: Parameters + ?Sized>(model: &M) -> Vec<LayerRecord> {
    model
        .tensors()
        .into_iter()
        .map(|(name, t): (String, &Tensor)| LayerRecord { name, shape: t.shape().to_vec(), data: t.data().to_vec() })
        .collect()
}

/// SHA-256 over layer names, shapes and little-endian parameter bytes.
pub fn fingerprint(layers: &[LayerRecord]) -> String {
    let mut h = Sha256::new();
    for l in layers {
        h.update((l.name.len() as u64).to_le_bytes());
        h.update(l.name.as_bytes());
        h.update((l.shape.len() as u64).to_le_bytes());
        for d in &l.shape {
            h.update((*d as u64).to_le_bytes());
        }
        for v in &l.data {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl ModelCheckpoint {
    pub const VERSION: u32 = 1;

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if self.layers.iter().flat_map(|l| &l.data).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("checkpoint contains NaN or infinite parameters".into()));
        }
        fsutil::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}
