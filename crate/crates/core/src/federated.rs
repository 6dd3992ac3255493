//! In-process FedAvg simulation.
//!
//! Each round broadcasts the global weights, trains every client locally
//! (clients run concurrently), and replaces the global weights with the
//! sample-weighted mean `w = Σ_k (n_k / n) · w_k`. Summation always runs in
//! ascending `client_id` order, so results do not depend on scheduling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{evaluate, DetectionReport, Detector, TrainConfig, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::nn::{layer_records, LayerRecord, ModelKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    #[default]
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederatedConfig {
    pub clients: usize,
    pub rounds: usize,
    pub epochs: usize,
    /// Mini-batch size; `None` means full-batch steps.
    pub batch_size: Option<usize>,
    pub lr: f64,
    pub seed: u64,
    pub model: ModelKind,
    #[serde(default)]
    pub partition: Partition,
}

impl FederatedConfig {
    /// Ten clients, twenty rounds, and the per-model local training defaults.
    pub fn defaults_for(model: ModelKind) -> Self {
        let (epochs, batch_size) = match model {
            ModelKind::CnnGru => (25, Some(512)),
            ModelKind::EGraphsage => (100, None),
        };
        Self { clients: 10, rounds: 20, epochs, batch_size, lr: 1e-3, seed: 0, model, partition: Partition::Equal }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::InvalidArgument("at least one client is required".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("at least one round is required".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        Ok(())
    }

    /// Local seed of `client` in `round`.
    pub fn client_seed(&self, client: usize, round: usize) -> u64 {
        self.seed ^ client as u64 ^ round as u64
    }

    pub fn train_config(&self, client: usize, round: usize) -> TrainConfig {
        TrainConfig { epochs: self.epochs, batch_size: self.batch_size, lr: self.lr, seed: self.client_seed(client, round) }
    }
}

/// What a client sends back to the server after local training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub layers: Vec<LayerRecord>,
    pub n_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientLoss {
    pub client_id: usize,
    pub n_k: usize,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub clients: Vec<ClientLoss>,
    pub test: Option<DetectionReport>,
}

/// Split `0..n` into `k` shuffled parts whose sizes differ by at most one.
pub fn partition_equal(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::InvalidArgument("cannot partition into zero clients".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("{k} clients but only {n} samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut parts = Vec::with_capacity(k);
    let mut start = 0;
    for c in 0..k {
        let len = base + usize::from(c < extra);
        parts.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(parts)
}

/// Sample-weighted average of client weights.
pub fn aggregate(updates: &[ClientUpdate]) -> Result<Vec<LayerRecord>> {
    let mut ordered: Vec<&ClientUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);
    let first = *ordered.first().ok_or_else(|| Error::InvalidArgument("no client updates to aggregate".into()))?;
    for u in &ordered {
        if u.n_k == 0 {
            return Err(Error::Aggregation { client: u.client_id, layer: String::new(), message: "n_k is zero".into() });
        }
        if u.layers.len() != first.layers.len() {
            return Err(Error::Aggregation {
                client: u.client_id,
                layer: String::new(),
                message: format!("{} layers, expected {}", u.layers.len(), first.layers.len()),
            });
        }
        for (l, r) in u.layers.iter().zip(&first.layers) {
            if l.name != r.name || l.shape != r.shape || l.data.len() != r.data.len() {
                return Err(Error::Aggregation {
                    client: u.client_id,
                    layer: l.name.clone(),
                    message: format!("shape {:?} does not match {} {:?}", l.shape, r.name, r.shape),
                });
            }
        }
    }
    let n: f64 = ordered.iter().map(|u| u.n_k as f64).sum();
    let coef: Vec<f64> = ordered.iter().map(|u| u.n_k as f64 / n).collect();
    let mut out = Vec::with_capacity(first.layers.len());
    for (li, layer) in first.layers.iter().enumerate() {
        // Σ c_k w_k written as w_1 + Σ c_k (w_k − w_1).
        let mut data = layer.data.clone();
        for (u, c) in ordered.iter().zip(&coef).skip(1) {
            for ((acc, w), w1) in data.iter_mut().zip(&u.layers[li].data).zip(&layer.data) {
                *acc += c * (w - w1);
            }
        }
        out.push(LayerRecord { name: layer.name.clone(), shape: layer.shape.clone(), data });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FederatedOutcome<D> {
    pub model: D,
    pub logs: Vec<RoundLog>,
}

/// Run `config.rounds` rounds of FedAvg from `initial`.
///
/// `on_round` sees each log as soon as its round finishes.
pub fn run_federated<D: Detector>(
    config: &FederatedConfig,
    initial: D,
    train: &D::Data,
    test: Option<&D::Data>,
    mut on_round: impl FnMut(&RoundLog) -> Result<()>,
) -> Result<FederatedOutcome<D>> {
    config.validate()?;
    if config.model != D::KIND {
        return Err(Error::ModelKind { expected: D::KIND.to_string(), found: config.model.to_string() });
    }
    let parts = partition_equal(D::sample_count(train), config.clients, config.seed)?;
    let client_data: Vec<D::Data> = parts.iter().map(|p| D::subset(train, p)).collect();
    let mut global = initial;
    let mut logs = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let results: Vec<Result<(ClientUpdate, Vec<f64>)>> = client_data
            .par_iter()
            .enumerate()
            .map(|(client_id, data)| {
                let mut local = global.clone();
                let losses = local
                    .train_local(data, &config.train_config(client_id, round))
                    .map_err(|e| Error::Client { client: client_id, source: Box::new(e) })?;
                let n_k = D::sample_count(data);
                Ok((ClientUpdate { client_id, layers: layer_records(&local), n_k }, losses))
            })
            .collect();
        let mut updates = Vec::with_capacity(results.len());
        let mut clients = Vec::with_capacity(results.len());
        for r in results {
            let (u, losses) = r?;
            clients.push(ClientLoss { client_id: u.client_id, n_k: u.n_k, losses });
            updates.push(u);
        }
        global.load_layers(&aggregate(&updates)?)?;
        let test = test.map(|t| evaluate(&global, t, DEFAULT_THRESHOLD)).transpose()?;
        let log = RoundLog { round, clients, test };
        log::info!("round {round} done");
        on_round(&log)?;
        logs.push(log);
    }
    Ok(FederatedOutcome { model: global, logs })
}
