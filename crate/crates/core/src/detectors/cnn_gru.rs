//! Convolutional/recurrent flow classifier.
//!
//! ```text
//! x (10,1) ─┬─ 3 × [Conv1D(3, 32) → ReLU → BatchNorm → MaxPool(2, stride 1)] → Flatten (320) ─┐
//!           └─ GRU (3) ──────────────────────────────────────────────────────────────────────┴─ Concat (323)
//!             → Dense (64) → Dense (1) → sigmoid
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Detector, TrainConfig};
use crate::error::{Error, Result};
use crate::netflow::{FeatureVector, NUM_FEATURES};
use crate::nn::{
    adam_step_model, maxpool_backward, maxpool_forward, relu, relu_backward, sigmoid, AdamConfig, AdamState,
    BatchNorm1d, BatchNormCache, Checkpointable, Conv1d, Dense, Gru, GruCache, Mode, ModelKind, Parameters, Tensor,
};

const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnGruConfig {
    pub seq_len: usize,
    pub conv_blocks: usize,
    pub conv_channels: usize,
    pub kernel: usize,
    pub gru_units: usize,
    pub hidden: usize,
}

impl Default for CnnGruConfig {
    fn default() -> Self {
        Self { seq_len: NUM_FEATURES, conv_blocks: 3, conv_channels: 32, kernel: 3, gru_units: 3, hidden: 64 }
    }
}

impl CnnGruConfig {
    pub fn flat_dim(&self) -> usize {
        self.seq_len * self.conv_channels
    }

    pub fn concat_dim(&self) -> usize {
        self.flat_dim() + self.gru_units
    }
}

#[derive(Debug, Clone)]
pub struct CnnGruModel {
    config: CnnGruConfig,
    pub convs: Vec<Conv1d>,
    pub norms: Vec<BatchNorm1d>,
    pub gru: Gru,
    pub dense: Dense,
    pub head: Dense,
    generation: u64,
}

#[derive(Debug, Clone)]
struct BlockCache {
    cols: Vec<f64>,
    activated: Vec<f64>,
    norm: BatchNormCache,
    pool_arg: Vec<usize>,
}

/// Everything `backward` needs from one forward pass.
#[derive(Debug, Clone)]
pub struct CnnGruCache {
    generation: u64,
    batch: usize,
    blocks: Vec<BlockCache>,
    gru: GruCache,
    concat: Vec<f64>,
    pub penultimate: Vec<f64>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Smallest distance of any ReLU input from 0 or max-pool pair from a tie.
    pub kink_margin: f64,
}

impl CnnGruModel {
    pub fn new(config: CnnGruConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.conv_channels;
        let convs = (0..config.conv_blocks)
            .map(|i| Conv1d::new(config.kernel, if i == 0 { 1 } else { c }, c, &mut rng))
            .collect();
        let norms = (0..config.conv_blocks).map(|_| BatchNorm1d::new(c)).collect();
        let gru = Gru::new(1, config.gru_units, &mut rng);
        let dense = Dense::new(config.concat_dim(), config.hidden, &mut rng);
        let head = Dense::new(config.hidden, 1, &mut rng);
        Self { config, convs, norms, gru, dense, head, generation: 0 }
    }

    pub fn config(&self) -> &CnnGruConfig {
        &self.config
    }

    /// Forward pass over `batch` rows of `seq_len` values each.
    pub fn forward(&self, x: &[f64], batch: usize, mode: Mode) -> Result<CnnGruCache> {
        let cfg = &self.config;
        let (len, ch) = (cfg.seq_len, cfg.conv_channels);
        if x.len() != batch * len {
            return Err(Error::dim("cnn_gru input", format!("{batch}×{len}"), x.len()));
        }
        let training = mode == Mode::Train;
        let mut blocks = Vec::with_capacity(cfg.conv_blocks);
        let mut h = x.to_vec();
        let mut kink_margin = f64::INFINITY;
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            let (pre, cols) = conv.forward(&h, batch, len);
            kink_margin = pre.iter().fold(kink_margin, |m, v| m.min(v.abs()));
            let activated = relu(&pre);
            let (normed, norm_cache) = norm.forward(&activated, batch * len, training);
            // Pairs of clamped zeros stay tied under any perturbation and are harmless.
            for b in 0..batch {
                let span = b * len * ch..(b + 1) * len * ch;
                let (row, act) = (&normed[span.clone()], &activated[span]);
                for i in 0..(len - 1) * ch {
                    if act[i] != 0.0 || act[i + ch] != 0.0 {
                        kink_margin = kink_margin.min((row[i] - row[i + ch]).abs());
                    }
                }
            }
            let (pooled, pool_arg) = maxpool_forward(&normed, batch, len, ch);
            blocks.push(BlockCache { cols, activated, norm: norm_cache, pool_arg });
            h = pooled;
        }
        let (gru_out, gru_cache) = self.gru.forward(x, batch, len);
        let flat = cfg.flat_dim();
        let units = cfg.gru_units;
        let mut concat = Vec::with_capacity(batch * cfg.concat_dim());
        for b in 0..batch {
            concat.extend_from_slice(&h[b * flat..(b + 1) * flat]);
            concat.extend_from_slice(&gru_out[b * units..(b + 1) * units]);
        }
        let penultimate = self.dense.forward(&concat, batch);
        let logits = self.head.forward(&penultimate, batch);
        let probabilities = logits.iter().map(|&z| sigmoid(z)).collect();
        Ok(CnnGruCache {
            generation: self.generation,
            batch,
            blocks,
            gru: gru_cache,
            concat,
            penultimate,
            logits,
            probabilities,
            kink_margin,
        })
    }

    /// Penultimate (Dense 64) activations in inference mode, `[batch, hidden]`.
    pub fn penultimate(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.forward(x, batch, Mode::Infer)?.penultimate)
    }

    /// Output head applied to penultimate activations; `forward` is exactly
    /// `head(penultimate(x))`.
    pub fn head(&self, penultimate: &[f64], batch: usize) -> Result<Vec<f64>> {
        if penultimate.len() != batch * self.config.hidden {
            return Err(Error::dim("cnn_gru head input", batch * self.config.hidden, penultimate.len()));
        }
        Ok(self.head.forward(penultimate, batch).into_iter().map(sigmoid).collect())
    }

    /// Backpropagate a gradient on the pre-sigmoid logits.
    ///
    /// Returns the input gradient `[batch, seq_len]` and parameter gradients
    /// held in a zeroed copy of the model.
    pub fn backward_logits(&self, cache: &CnnGruCache, dlogits: &[f64]) -> Result<(Vec<f64>, CnnGruModel)> {
        if cache.generation != self.generation {
            return Err(Error::Contract("cnn_gru cache was produced before the parameters changed".into()));
        }
        let cfg = &self.config;
        let batch = cache.batch;
        if dlogits.len() != batch {
            return Err(Error::dim("cnn_gru output gradient", batch, dlogits.len()));
        }
        let mut grads = self.zeros_like();
        let dpen = self.head.backward(&cache.penultimate, batch, dlogits, &mut grads.head);
        let dconcat = self.dense.backward(&cache.concat, batch, &dpen, &mut grads.dense);
        let (flat, units, width) = (cfg.flat_dim(), cfg.gru_units, cfg.concat_dim());
        let mut dh = Vec::with_capacity(batch * flat);
        let mut dgru = Vec::with_capacity(batch * units);
        for row in dconcat.chunks_exact(width) {
            dh.extend_from_slice(&row[..flat]);
            dgru.extend_from_slice(&row[flat..]);
        }
        let dx_gru = self.gru.backward(&cache.gru, &dgru, &mut grads.gru);
        let len = cfg.seq_len;
        for (i, block) in cache.blocks.iter().enumerate().rev() {
            let d = maxpool_backward(&block.pool_arg, &dh);
            let d = self.norms[i].backward(&block.norm, batch * len, &d, &mut grads.norms[i]);
            let d = relu_backward(&block.activated, &d);
            dh = self.convs[i].backward(&block.cols, batch, len, &d, &mut grads.convs[i]);
        }
        for (a, b) in dh.iter_mut().zip(&dx_gru) {
            *a += b;
        }
        Ok((dh, grads))
    }

    /// Backpropagate a gradient on the sigmoid output.
    pub fn backward(&self, cache: &CnnGruCache, doutput: &[f64]) -> Result<(Vec<f64>, CnnGruModel)> {
        let dlogits: Vec<f64> =
            doutput.iter().zip(&cache.probabilities).map(|(&d, &p)| d * p * (1.0 - p)).collect();
        self.backward_logits(cache, &dlogits)
    }

    /// Fold training-mode batch statistics into the running averages.
    pub fn update_running(&mut self, cache: &CnnGruCache) {
        for (norm, block) in self.norms.iter_mut().zip(&cache.blocks) {
            norm.update_running(&block.norm);
        }
        self.generation += 1;
    }

    fn flatten(data: &[FeatureVector], indices: &[usize]) -> Vec<f64> {
        indices.iter().flat_map(|&i| data[i].values).collect()
    }

    /// Attack probabilities in inference mode.
    pub fn predict_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let len = self.config.seq_len;
        if x.len() % len != 0 {
            return Err(Error::dim("cnn_gru input", format!("multiple of {len}"), x.len()));
        }
        let chunks: Vec<Result<Vec<f64>>> = x
            .par_chunks(EVAL_CHUNK * len)
            .map(|c| Ok(self.forward(c, c.len() / len, Mode::Infer)?.probabilities))
            .collect();
        let mut out = Vec::with_capacity(x.len() / len);
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }
}

/// Numerically stable binary cross-entropy on a logit.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl Parameters for CnnGruModel {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, (c, n)) in self.convs.iter().zip(&self.norms).enumerate() {
            out.push((format!("conv{i}.weight"), &c.weight));
            out.push((format!("conv{i}.bias"), &c.bias));
            out.push((format!("bn{i}.gamma"), &n.gamma));
            out.push((format!("bn{i}.beta"), &n.beta));
            out.push((format!("bn{i}.running_mean"), &n.running_mean));
            out.push((format!("bn{i}.running_var"), &n.running_var));
        }
        out.push(("gru.input_weight".into(), &self.gru.input_weight));
        out.push(("gru.recurrent_weight".into(), &self.gru.recurrent_weight));
        out.push(("gru.bias".into(), &self.gru.bias));
        out.push(("dense.weight".into(), &self.dense.weight));
        out.push(("dense.bias".into(), &self.dense.bias));
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.generation += 1;
        let mut out = Vec::new();
        for (i, (c, n)) in self.convs.iter_mut().zip(self.norms.iter_mut()).enumerate() {
            out.push((format!("conv{i}.weight"), &mut c.weight));
            out.push((format!("conv{i}.bias"), &mut c.bias));
            out.push((format!("bn{i}.gamma"), &mut n.gamma));
            out.push((format!("bn{i}.beta"), &mut n.beta));
            out.push((format!("bn{i}.running_mean"), &mut n.running_mean));
            out.push((format!("bn{i}.running_var"), &mut n.running_var));
        }
        out.push(("gru.input_weight".into(), &mut self.gru.input_weight));
        out.push(("gru.recurrent_weight".into(), &mut self.gru.recurrent_weight));
        out.push(("gru.bias".into(), &mut self.gru.bias));
        out.push(("dense.weight".into(), &mut self.dense.weight));
        out.push(("dense.bias".into(), &mut self.dense.bias));
        out.push(("head.weight".into(), &mut self.head.weight));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }
}

impl Checkpointable for CnnGruModel {
    const KIND: ModelKind = ModelKind::CnnGru;

    fn architecture(&self) -> serde_json::Value {
        serde_json::to_value(self.config).expect("config serializes")
    }

    fn from_architecture(arch: &serde_json::Value) -> Result<Self> {
        let config: CnnGruConfig = serde_json::from_value(arch.clone())
            .map_err(|e| Error::Checkpoint(format!("invalid cnn_gru architecture: {e}")))?;
        if config.seq_len == 0 || config.conv_blocks == 0 || config.kernel % 2 == 0 {
            return Err(Error::Checkpoint(format!("invalid cnn_gru architecture: {config:?}")));
        }
        Ok(Self::new(config, 0))
    }
}

impl Detector for CnnGruModel {
    type Data = Vec<FeatureVector>;

    fn sample_count(data: &Self::Data) -> usize {
        data.len()
    }

    fn labels(data: &Self::Data) -> Vec<u8> {
        data.iter().map(|v| v.label).collect()
    }

    fn subset(data: &Self::Data, indices: &[usize]) -> Self::Data {
        indices.iter().map(|&i| data[i].clone()).collect()
    }

    fn train_local(&mut self, data: &Self::Data, cfg: &TrainConfig) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
        }
        if self.config.seq_len != NUM_FEATURES {
            return Err(Error::dim("cnn_gru sequence length", NUM_FEATURES, self.config.seq_len));
        }
        let batch_size = cfg.batch_size.unwrap_or(data.len()).max(1);
        let adam = AdamConfig::with_lr(cfg.lr);
        let mut state = AdamState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for idx in order.chunks(batch_size) {
                let x = Self::flatten(data, idx);
                let cache = self.forward(&x, idx.len(), Mode::Train)?;
                let n = idx.len() as f64;
                let mut dlogits = Vec::with_capacity(idx.len());
                for (&i, (&z, &p)) in idx.iter().zip(cache.logits.iter().zip(&cache.probabilities)) {
                    let y = data[i].label as f64;
                    total += bce_with_logit(z, y);
                    dlogits.push((p - y) / n);
                }
                if !total.is_finite() {
                    return Err(Error::Training { epoch, message: "loss is not finite".into() });
                }
                let (_, grads) = self.backward_logits(&cache, &dlogits)?;
                adam_step_model(self, &grads, &mut state, &adam)
                    .map_err(|e| Error::Training { epoch, message: e.to_string() })?;
                self.update_running(&cache);
            }
            history.push(total / data.len() as f64);
        }
        Ok(history)
    }

    fn predict_proba(&self, data: &Self::Data) -> Result<Vec<f64>> {
        let x: Vec<f64> = data.iter().flat_map(|v| v.values).collect();
        self.predict_values(&x)
    }

    fn penultimate_rows(&self, data: &Self::Data, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
        let hidden = self.config.hidden;
        let mut out = Vec::with_capacity(indices.len());
        for chunk in indices.chunks(EVAL_CHUNK) {
            let pen = self.penultimate(&Self::flatten(data, chunk), chunk.len())?;
            out.extend(pen.chunks_exact(hidden).map(<[f64]>::to_vec));
        }
        Ok(out)
    }
}
