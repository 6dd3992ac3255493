mod explain;
mod preprocess;
mod quality;
mod synth;
mod train;

pub use explain::run as explain;
pub use preprocess::run as preprocess;
pub use quality::run as quality;
pub use synth::run as synth;
pub use train::{evaluate, train};

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fedhunter_core::detectors::{CnnGruModel, Detector, EGraphSageModel};
use fedhunter_core::netflow::{load_features, FeatureVector};
use fedhunter_core::nn::{Checkpointable, ModelCheckpoint, ModelKind};
use fedhunter_core::provenance::ProvenanceGraph;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a finished command reports for its manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    /// Written artifacts; the first one gets the manifest.
    pub outputs: Vec<PathBuf>,
}

/// Bad invocation that clap cannot catch on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A detector whose dataset lives in one file.
pub trait DataFile: Detector {
    fn load_data(path: &Path) -> Result<Self::Data>;
}

impl DataFile for CnnGruModel {
    fn load_data(path: &Path) -> Result<Vec<FeatureVector>> {
        Ok(load_features(path)?)
    }
}

impl DataFile for EGraphSageModel {
    fn load_data(path: &Path) -> Result<ProvenanceGraph> {
        Ok(ProvenanceGraph::load(path)?)
    }
}

pub enum LoadedModel {
    CnnGru(CnnGruModel),
    EGraphSage(EGraphSageModel),
}

pub fn load_model(path: &Path) -> Result<(LoadedModel, ModelCheckpoint)> {
    let ckpt = ModelCheckpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let model = match ckpt.model_kind {
        ModelKind::CnnGru => LoadedModel::CnnGru(CnnGruModel::from_checkpoint(&ckpt)?),
        ModelKind::EGraphsage => LoadedModel::EGraphSage(EGraphSageModel::from_checkpoint(&ckpt)?),
    };
    Ok((model, ckpt))
}

/// Checkpoint that must hold a CNN&GRU model.
pub fn load_cnn(path: &Path) -> Result<CnnGruModel> {
    match load_model(path)?.0 {
        LoadedModel::CnnGru(m) => Ok(m),
        LoadedModel::EGraphSage(_) => Err(fedhunter_core::Error::ModelKind {
            expected: ModelKind::CnnGru.to_string(),
            found: ModelKind::EGraphsage.to_string(),
        }
        .into()),
    }
}

pub fn check_index(index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(fedhunter_core::Error::InvalidArgument(format!(
            "instance index {index} out of range for {len} samples"
        ))
        .into());
    }
    Ok(())
}

/// Seeded sample of up to `n` rows, in data order.
pub fn background_rows(data: &[FeatureVector], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = if data.len() > n { sample(&mut rng, data.len(), n).into_vec() } else { (0..data.len()).collect() };
    idx.sort_unstable();
    idx.into_iter().map(|i| data[i].values.to_vec()).collect()
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fedhunter_core::fsutil::write_json(path, value)?;
    Ok(())
}
