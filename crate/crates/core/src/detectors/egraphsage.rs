//! Edge-feature GraphSAGE for provenance edge classification.
//!
//! Each layer updates every node from its own state and the mean, over its
//! incident edges, of `[neighbor state, edge features]`:
//!
//! ```text
//! h_v' = ReLU(W · [h_v, mean_{(e,u) ∋ v} [h_u, x_e]] + b)
//! ```
//!
//! An edge `(u, v)` is scored by a dense softmax head on `[h_u, h_v]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Detector, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step_model, dropout_mask, relu, relu_backward, softmax, AdamConfig, AdamState, Checkpointable, Dense, Mode,
    ModelKind, Parameters, Tensor,
};
use crate::provenance::{ProvenanceGraph, EMBEDDING_DIM};

pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EGraphSageConfig {
    pub node_dim: usize,
    pub edge_dim: usize,
    /// Output width of each message-passing layer.
    pub layer_dims: Vec<usize>,
    pub dropout: f64,
}

impl Default for EGraphSageConfig {
    fn default() -> Self {
        Self { node_dim: EMBEDDING_DIM, edge_dim: EMBEDDING_DIM, layer_dims: vec![128, EMBEDDING_DIM], dropout: 0.2 }
    }
}

impl EGraphSageConfig {
    pub fn embedding_dim(&self) -> usize {
        *self.layer_dims.last().unwrap_or(&self.node_dim)
    }

    /// Width of the edge representation fed to the head.
    pub fn penultimate_dim(&self) -> usize {
        2 * self.embedding_dim()
    }
}

/// Dense feature view of a graph: node and edge features plus topology.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTensors {
    pub node_dim: usize,
    pub edge_dim: usize,
    /// `[nodes, node_dim]`
    pub node_features: Vec<f64>,
    /// `[edges, edge_dim]`
    pub edge_features: Vec<f64>,
    pub endpoints: Vec<(usize, usize)>,
    pub labels: Vec<u8>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl GraphTensors {
    pub fn new(
        node_dim: usize,
        edge_dim: usize,
        node_features: Vec<f64>,
        edge_features: Vec<f64>,
        endpoints: Vec<(usize, usize)>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        if node_dim == 0 || node_features.len() % node_dim != 0 {
            return Err(Error::dim("node features", format!("multiple of {node_dim}"), node_features.len()));
        }
        if edge_features.len() != endpoints.len() * edge_dim {
            return Err(Error::dim("edge features", endpoints.len() * edge_dim, edge_features.len()));
        }
        if labels.len() != endpoints.len() {
            return Err(Error::dim("edge labels", endpoints.len(), labels.len()));
        }
        let n = node_features.len() / node_dim;
        if let Some(&(s, d)) = endpoints.iter().find(|&&(s, d)| s >= n || d >= n) {
            return Err(Error::Graph(format!("edge endpoint ({s}, {d}) out of range for {n} nodes")));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (e, &(s, d)) in endpoints.iter().enumerate() {
            adjacency[s].push((e, d));
            if s != d {
                adjacency[d].push((e, s));
            }
        }
        Ok(Self { node_dim, edge_dim, node_features, edge_features, endpoints, labels, adjacency })
    }

    pub fn from_graph(graph: &ProvenanceGraph) -> Result<Self> {
        let node_dim = graph.nodes().first().map_or(EMBEDDING_DIM, |n| n.embedding.len());
        let edge_dim = graph.edges().first().map_or(EMBEDDING_DIM, |e| e.embedding.len());
        let mut node_features = Vec::with_capacity(graph.node_count() * node_dim);
        for n in graph.nodes() {
            if n.embedding.len() != node_dim {
                return Err(Error::dim(format!("embedding of node '{}'", n.id), node_dim, n.embedding.len()));
            }
            node_features.extend_from_slice(&n.embedding);
        }
        let mut edge_features = Vec::with_capacity(graph.edge_count() * edge_dim);
        for e in graph.edges() {
            if e.embedding.len() != edge_dim {
                return Err(Error::dim(format!("embedding of edge '{}'", e.id), edge_dim, e.embedding.len()));
            }
            edge_features.extend_from_slice(&e.embedding);
        }
        Self::new(node_dim, edge_dim, node_features, edge_features, graph.endpoints().to_vec(), graph.edge_labels())
    }

    pub fn node_count(&self) -> usize {
        self.node_features.len() / self.node_dim
    }

    pub fn edge_count(&self) -> usize {
        self.endpoints.len()
    }

    /// Incident `(edge, neighbor)` pairs per node, in ascending edge order.
    pub fn adjacency(&self) -> &[Vec<(usize, usize)>] {
        &self.adjacency
    }

    /// Same topology with replaced features.
    pub fn with_features(&self, node_features: Vec<f64>, edge_features: Vec<f64>) -> Result<Self> {
        if node_features.len() != self.node_features.len() || edge_features.len() != self.edge_features.len() {
            return Err(Error::dim(
                "replacement features",
                format!("{}+{}", self.node_features.len(), self.edge_features.len()),
                format!("{}+{}", node_features.len(), edge_features.len()),
            ));
        }
        Ok(Self { node_features, edge_features, ..self.clone() })
    }
}

#[derive(Debug, Clone)]
pub struct EGraphSageModel {
    config: EGraphSageConfig,
    pub layers: Vec<Dense>,
    pub head: Dense,
    generation: u64,
}

#[derive(Debug, Clone)]
pub struct EGraphSageCache {
    generation: u64,
    nodes: usize,
    edges: usize,
    /// Per layer: aggregated input `[nodes, 2d + edge_dim]` and ReLU output.
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    mask: Option<Vec<f64>>,
    /// Edge representations `[edges, 2 * embedding_dim]`.
    pub penultimate: Vec<f64>,
    pub logits: Vec<f64>,
    /// Row-wise softmax `[edges, 2]`.
    pub probabilities: Vec<f64>,
    /// Smallest distance of any ReLU input from 0.
    pub kink_margin: f64,
}

impl EGraphSageModel {
    pub fn new(config: EGraphSageConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = config.node_dim;
        let mut layers = Vec::with_capacity(config.layer_dims.len());
        for &out in &config.layer_dims {
            layers.push(Dense::new(2 * d + config.edge_dim, out, &mut rng));
            d = out;
        }
        let head = Dense::new(2 * d, NUM_CLASSES, &mut rng);
        Self { config, layers, head, generation: 0 }
    }

    pub fn config(&self) -> &EGraphSageConfig {
        &self.config
    }

    /// Forward pass. In training mode `dropout` must hold one mask entry per
    /// final node-embedding component; it is ignored in inference.
    pub fn forward(&self, g: &GraphTensors, mode: Mode, dropout: Option<&[f64]>) -> Result<EGraphSageCache> {
        if g.node_dim != self.config.node_dim {
            return Err(Error::dim("node feature width", self.config.node_dim, g.node_dim));
        }
        if g.edge_dim != self.config.edge_dim {
            return Err(Error::dim("edge feature width", self.config.edge_dim, g.edge_dim));
        }
        let (n, de) = (g.node_count(), g.edge_dim);
        let mut h = g.node_features.clone();
        let mut d = g.node_dim;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut kink_margin = f64::INFINITY;
        for layer in &self.layers {
            let width = 2 * d + de;
            let mut z = vec![0.0; n * width];
            for v in 0..n {
                let row = &mut z[v * width..(v + 1) * width];
                row[..d].copy_from_slice(&h[v * d..(v + 1) * d]);
                let adj = &g.adjacency[v];
                if adj.is_empty() {
                    continue;
                }
                let (nbr, edge) = row[d..].split_at_mut(d);
                for &(e, u) in adj {
                    for (a, b) in nbr.iter_mut().zip(&h[u * d..(u + 1) * d]) {
                        *a += b;
                    }
                    for (a, b) in edge.iter_mut().zip(&g.edge_features[e * de..(e + 1) * de]) {
                        *a += b;
                    }
                }
                let inv = 1.0 / adj.len() as f64;
                row[d..].iter_mut().for_each(|x| *x *= inv);
            }
            let pre = layer.forward(&z, n);
            kink_margin = pre.iter().fold(kink_margin, |m, v| m.min(v.abs()));
            let out = relu(&pre);
            d = layer.output_dim();
            inputs.push(z);
            h = out.clone();
            outputs.push(out);
        }
        let mask = match (mode, dropout) {
            (Mode::Train, Some(m)) => {
                if m.len() != h.len() {
                    return Err(Error::dim("dropout mask", h.len(), m.len()));
                }
                h.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
                Some(m.to_vec())
            }
            _ => None,
        };
        let edges = g.edge_count();
        let mut penultimate = Vec::with_capacity(edges * 2 * d);
        for &(s, t) in &g.endpoints {
            penultimate.extend_from_slice(&h[s * d..(s + 1) * d]);
            penultimate.extend_from_slice(&h[t * d..(t + 1) * d]);
        }
        let logits = self.head.forward(&penultimate, edges);
        let probabilities = softmax(&logits, NUM_CLASSES);
        Ok(EGraphSageCache {
            generation: self.generation,
            nodes: n,
            edges,
            inputs,
            outputs,
            mask,
            penultimate,
            logits,
            probabilities,
            kink_margin,
        })
    }

    /// Softmax head on edge representations; `forward` is exactly
    /// `head(penultimate)`.
    pub fn head(&self, penultimate: &[f64], edges: usize) -> Result<Vec<f64>> {
        if penultimate.len() != edges * self.config.penultimate_dim() {
            return Err(Error::dim("e_graphsage head input", edges * self.config.penultimate_dim(), penultimate.len()));
        }
        Ok(softmax(&self.head.forward(penultimate, edges), NUM_CLASSES))
    }

    /// Backpropagate a gradient on the logits `[edges, 2]`.
    ///
    /// Returns node-feature and edge-feature gradients and parameter gradients.
    pub fn backward_logits(
        &self,
        g: &GraphTensors,
        cache: &EGraphSageCache,
        dlogits: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, EGraphSageModel)> {
        if cache.generation != self.generation {
            return Err(Error::Contract("e_graphsage cache was produced before the parameters changed".into()));
        }
        if cache.nodes != g.node_count() || cache.edges != g.edge_count() {
            return Err(Error::Contract("e_graphsage cache belongs to a different graph".into()));
        }
        if dlogits.len() != cache.edges * NUM_CLASSES {
            return Err(Error::dim("e_graphsage output gradient", cache.edges * NUM_CLASSES, dlogits.len()));
        }
        let mut grads = self.zeros_like();
        let n = cache.nodes;
        let de = g.edge_dim;
        let drep = self.head.backward(&cache.penultimate, cache.edges, dlogits, &mut grads.head);
        let mut d = self.config.embedding_dim();
        let mut dh = vec![0.0; n * d];
        for (row, &(s, t)) in drep.chunks_exact(2 * d).zip(&g.endpoints) {
            for (a, b) in dh[s * d..(s + 1) * d].iter_mut().zip(&row[..d]) {
                *a += b;
            }
            for (a, b) in dh[t * d..(t + 1) * d].iter_mut().zip(&row[d..]) {
                *a += b;
            }
        }
        if let Some(mask) = &cache.mask {
            dh.iter_mut().zip(mask).for_each(|(a, b)| *a *= b);
        }
        let mut dedge = vec![0.0; g.edge_features.len()];
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let da = relu_backward(&cache.outputs[k], &dh);
            let dz = layer.backward(&cache.inputs[k], n, &da, &mut grads.layers[k]);
            d = if k == 0 { g.node_dim } else { self.layers[k - 1].output_dim() };
            let width = 2 * d + de;
            let mut dprev = vec![0.0; n * d];
            for v in 0..n {
                let row = &dz[v * width..(v + 1) * width];
                for (a, b) in dprev[v * d..(v + 1) * d].iter_mut().zip(&row[..d]) {
                    *a += b;
                }
                let adj = &g.adjacency[v];
                if adj.is_empty() {
                    continue;
                }
                let inv = 1.0 / adj.len() as f64;
                for &(e, u) in adj {
                    for (a, b) in dprev[u * d..(u + 1) * d].iter_mut().zip(&row[d..2 * d]) {
                        *a += b * inv;
                    }
                    for (a, b) in dedge[e * de..(e + 1) * de].iter_mut().zip(&row[2 * d..]) {
                        *a += b * inv;
                    }
                }
            }
            dh = dprev;
        }
        Ok((dh, dedge, grads))
    }

    /// Backpropagate a gradient on the softmax probabilities `[edges, 2]`.
    pub fn backward(
        &self,
        g: &GraphTensors,
        cache: &EGraphSageCache,
        dprobs: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, EGraphSageModel)> {
        if dprobs.len() != cache.probabilities.len() {
            return Err(Error::dim("e_graphsage output gradient", cache.probabilities.len(), dprobs.len()));
        }
        let mut dlogits = vec![0.0; dprobs.len()];
        for ((dl, dp), p) in dlogits
            .chunks_exact_mut(NUM_CLASSES)
            .zip(dprobs.chunks_exact(NUM_CLASSES))
            .zip(cache.probabilities.chunks_exact(NUM_CLASSES))
        {
            let dot: f64 = dp.iter().zip(p).map(|(a, b)| a * b).sum();
            for c in 0..NUM_CLASSES {
                dl[c] = p[c] * (dp[c] - dot);
            }
        }
        self.backward_logits(g, cache, &dlogits)
    }

    /// Attack probability per edge in inference mode.
    pub fn predict_edges(&self, g: &GraphTensors) -> Result<Vec<f64>> {
        let cache = self.forward(g, Mode::Infer, None)?;
        Ok(cache.probabilities.chunks_exact(NUM_CLASSES).map(|p| p[1]).collect())
    }

    /// Inverse-frequency class weights renormalized to mean 1 over the
    /// classes present.
    pub fn class_weights(labels: &[u8]) -> [f64; NUM_CLASSES] {
        let mut counts = [0usize; NUM_CLASSES];
        for &l in labels {
            counts[(l as usize).min(NUM_CLASSES - 1)] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count().max(1);
        let raw: Vec<f64> = counts.iter().map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 }).collect();
        let mean = raw.iter().sum::<f64>() / present as f64;
        let mut w = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            w[c] = if mean > 0.0 { raw[c] / mean } else { 1.0 };
        }
        w
    }

    /// Class-weighted cross-entropy over all edges and its logit gradient.
    pub fn weighted_loss(probabilities: &[f64], labels: &[u8], weights: &[f64; NUM_CLASSES]) -> (f64, Vec<f64>) {
        let total_w: f64 = labels.iter().map(|&l| weights[l as usize]).sum();
        let mut loss = 0.0;
        let mut dlogits = vec![0.0; probabilities.len()];
        for ((p, &l), dl) in
            probabilities.chunks_exact(NUM_CLASSES).zip(labels).zip(dlogits.chunks_exact_mut(NUM_CLASSES))
        {
            let w = weights[l as usize] / total_w;
            loss -= w * p[l as usize].max(f64::MIN_POSITIVE).ln();
            for c in 0..NUM_CLASSES {
                let y = if c == l as usize { 1.0 } else { 0.0 };
                dl[c] = w * (p[c] - y);
            }
        }
        (loss, dlogits)
    }

    /// Full-graph training on tensors; one Adam step per epoch.
    pub fn train_tensors(&mut self, g: &GraphTensors, cfg: &TrainConfig) -> Result<Vec<f64>> {
        if g.edge_count() == 0 {
            return Err(Error::InvalidArgument("cannot train on a graph without edges".into()));
        }
        let weights = Self::class_weights(&g.labels);
        let adam = AdamConfig::with_lr(cfg.lr);
        let mut state = AdamState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mask_len = g.node_count() * self.config.embedding_dim();
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let mask = (self.config.dropout > 0.0).then(|| dropout_mask(mask_len, self.config.dropout, &mut rng));
            let cache = self.forward(g, Mode::Train, mask.as_deref())?;
            let (loss, dlogits) = Self::weighted_loss(&cache.probabilities, &g.labels, &weights);
            if !loss.is_finite() {
                return Err(Error::Training { epoch, message: "loss is not finite".into() });
            }
            let (_, _, grads) = self.backward_logits(g, &cache, &dlogits)?;
            adam_step_model(self, &grads, &mut state, &adam)
                .map_err(|e| Error::Training { epoch, message: e.to_string() })?;
            history.push(loss);
        }
        Ok(history)
    }
}

impl Parameters for EGraphSageModel {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("sage{i}.weight"), &l.weight));
            out.push((format!("sage{i}.bias"), &l.bias));
        }
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.generation += 1;
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("sage{i}.weight"), &mut l.weight));
            out.push((format!("sage{i}.bias"), &mut l.bias));
        }
        out.push(("head.weight".into(), &mut self.head.weight));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }
}

impl Checkpointable for EGraphSageModel {
    const KIND: ModelKind = ModelKind::EGraphsage;

    fn architecture(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    fn from_architecture(arch: &serde_json::Value) -> Result<Self> {
        let config: EGraphSageConfig = serde_json::from_value(arch.clone())
            .map_err(|e| Error::Checkpoint(format!("invalid e_graphsage architecture: {e}")))?;
        if config.layer_dims.is_empty() || !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Checkpoint(format!("invalid e_graphsage architecture: {config:?}")));
        }
        Ok(Self::new(config, 0))
    }
}

impl Detector for EGraphSageModel {
    type Data = ProvenanceGraph;

    fn sample_count(data: &Self::Data) -> usize {
        data.edge_count()
    }

    fn labels(data: &Self::Data) -> Vec<u8> {
        data.edge_labels()
    }

    fn subset(data: &Self::Data, indices: &[usize]) -> Self::Data {
        data.edge_subgraph(indices)
    }

    fn train_local(&mut self, data: &Self::Data, cfg: &TrainConfig) -> Result<Vec<f64>> {
        self.train_tensors(&GraphTensors::from_graph(data)?, cfg)
    }

    fn predict_proba(&self, data: &Self::Data) -> Result<Vec<f64>> {
        self.predict_edges(&GraphTensors::from_graph(data)?)
    }

    fn penultimate_rows(&self, data: &Self::Data, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
        let cache = self.forward(&GraphTensors::from_graph(data)?, Mode::Infer, None)?;
        let w = self.config.penultimate_dim();
        indices
            .iter()
            .map(|&i| {
                cache
                    .penultimate
                    .get(i * w..(i + 1) * w)
                    .map(<[f64]>::to_vec)
                    .ok_or_else(|| Error::InvalidArgument(format!("edge index {i} out of range")))
            })
            .collect()
    }
}
