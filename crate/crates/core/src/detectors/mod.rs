//! The two detectors, their shared training/evaluation surface, and metrics.

mod cnn_gru;
mod egraphsage;
mod metrics;

pub use cnn_gru::{CnnGruCache, CnnGruConfig, CnnGruModel};
pub use egraphsage::{EGraphSageCache, EGraphSageConfig, EGraphSageModel, GraphTensors, NUM_CLASSES};
pub use metrics::{ConfusionCounts, DetectionReport};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{fingerprint, layer_records, Checkpointable};

/// Default decision threshold on the attack probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` trains on the whole dataset per step.
    pub batch_size: Option<usize>,
    pub lr: f64,
    pub seed: u64,
}

/// A trainable binary detector over some sample collection.
///
/// Samples are flows for the CNN&GRU model and edges for E-GraphSAGE.
pub trait Detector: Checkpointable + Clone + Send + Sync {
    type Data: Send + Sync;

    fn sample_count(data: &Self::Data) -> usize;

    fn labels(data: &Self::Data) -> Vec<u8>;

    /// The samples at `indices`, as a standalone dataset.
    fn subset(data: &Self::Data, indices: &[usize]) -> Self::Data;

    /// Train in place with a fresh optimizer state; returns per-epoch loss.
    fn train_local(&mut self, data: &Self::Data, cfg: &TrainConfig) -> Result<Vec<f64>>;

    /// Attack probability per sample, in inference mode.
    fn predict_proba(&self, data: &Self::Data) -> Result<Vec<f64>>;

    /// Penultimate-layer activations for the samples at `indices`.
    fn penultimate_rows(&self, data: &Self::Data, indices: &[usize]) -> Result<Vec<Vec<f64>>>;

    /// SHA-256 over every parameter tensor.
    fn fingerprint(&self) -> String {
        fingerprint(&layer_records(self))
    }
}

pub fn evaluate<D: Detector>(model: &D, data: &D::Data, threshold: f64) -> Result<DetectionReport> {
    let probs = model.predict_proba(data)?;
    DetectionReport::from_scores(&probs, &D::labels(data), threshold)
}
