use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_rows, gradient_shap, Differentiable, ExplainMode, GradientShapConfig, Predictor};
use crate::detectors::{EGraphSageModel, GraphTensors, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::provenance::ProvenanceGraph;

/// One edge's class probability as a function of every node and edge feature
/// of a graph, flattened as `[node features…, edge features…]`.
pub struct EdgeScore<'a> {
    model: &'a EGraphSageModel,
    graph: GraphTensors,
    edge: usize,
    class: usize,
}

impl<'a> EdgeScore<'a> {
    pub fn new(model: &'a EGraphSageModel, graph: GraphTensors, edge: usize, class: usize) -> Result<Self> {
        if edge >= graph.edge_count() {
            return Err(Error::Graph(format!("edge index {edge} out of range for {} edges", graph.edge_count())));
        }
        if class >= NUM_CLASSES {
            return Err(Error::InvalidArgument(format!("class {class} out of range")));
        }
        Ok(Self { model, graph, edge, class })
    }

    /// The graph's current features in input layout.
    pub fn input(&self) -> Vec<f64> {
        [self.graph.node_features.as_slice(), self.graph.edge_features.as_slice()].concat()
    }

    fn node_len(&self) -> usize {
        self.graph.node_features.len()
    }

    fn graph_for(&self, row: &[f64]) -> Result<GraphTensors> {
        let (nf, ef) = row.split_at(self.node_len());
        self.graph.with_features(nf.to_vec(), ef.to_vec())
    }

    fn output_index(&self) -> usize {
        self.edge * NUM_CLASSES + self.class
    }
}

impl Predictor for EdgeScore<'_> {
    fn dim(&self) -> usize {
        self.graph.node_features.len() + self.graph.edge_features.len()
    }

    fn predict(&self, rows: &[f64]) -> Result<Vec<f64>> {
        check_rows(rows, self.dim())?;
        rows.par_chunks(self.dim())
            .map(|row| {
                let cache = self.model.forward(&self.graph_for(row)?, Mode::Infer, None)?;
                Ok(cache.probabilities[self.output_index()])
            })
            .collect()
    }
}

impl Differentiable for EdgeScore<'_> {
    fn value_and_grad(&self, rows: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_rows(rows, self.dim())?;
        let per_row: Vec<(f64, Vec<f64>)> = rows
            .par_chunks(self.dim())
            .map(|row| {
                let g = self.graph_for(row)?;
                let cache = self.model.forward(&g, Mode::Infer, None)?;
                let mut dprobs = vec![0.0; cache.probabilities.len()];
                dprobs[self.output_index()] = 1.0;
                let (dnode, dedge, _) = self.model.backward(&g, &cache, &dprobs)?;
                Ok((cache.probabilities[self.output_index()], [dnode, dedge].concat()))
            })
            .collect::<Result<_>>()?;
        let (values, grads): (Vec<f64>, Vec<Vec<f64>>) = per_row.into_iter().unzip();
        Ok((values, grads.concat()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeExplainConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for EdgeExplainConfig {
    fn default() -> Self {
        Self { samples: 50, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNode {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEdge {
    pub id: String,
    pub src: String,
    pub dst: String,
    /// Class predicted for this edge within the subgraph.
    pub class: u8,
    pub score: f64,
}

/// Node-centered explanation of one edge prediction. Scores lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphExplanation {
    pub edge_id: String,
    pub predicted_class: u8,
    /// Probability of the predicted class.
    pub probability: f64,
    /// Output on the all-zero baseline.
    pub baseline_value: f64,
    pub center: String,
    pub hops: usize,
    pub mode: ExplainMode,
    pub seed: u64,
    pub nodes: Vec<ScoredNode>,
    pub edges: Vec<ScoredEdge>,
}

impl SubgraphExplanation {
    pub fn node_score(&self, id: &str) -> Option<f64> {
        self.nodes.iter().find(|n| n.id == id).map(|n| n.score)
    }

    pub fn edge_score(&self, id: &str) -> Option<f64> {
        self.edges.iter().find(|e| e.id == id).map(|e| e.score)
    }

    /// Graphviz rendering; the explained edge is drawn red and the center node bold.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph explanation {\n");
        for n in &self.nodes {
            let style = if n.id == self.center { ", style=bold" } else { "" };
            let _ = writeln!(out, "  \"{0}\" [label=\"{0}\\nscore={1:.3}\"{2}];", esc(&n.id), n.score, style);
        }
        for e in &self.edges {
            let style = if e.id == self.edge_id { ", color=red, penwidth=2" } else { "" };
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"class={}, score={:.3}\"{}];",
                esc(&e.src),
                esc(&e.dst),
                e.class,
                e.score,
                style
            );
        }
        out.push_str("}\n");
        out
    }
}

fn esc(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Divide non-negative importances by their maximum; all zeros stay zero.
pub fn normalize_scores(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        raw.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

fn argmax(p: &[f64]) -> usize {
    p.iter().enumerate().fold(0, |best, (i, &v)| if v > p[best] { i } else { best })
}

/// Explain the prediction for `edge_id` on its `hops`-hop subgraph.
///
/// GradientSHAP runs from an all-zero baseline over every node and edge
/// feature of the subgraph; a node's (edge's) importance is the absolute sum
/// of its feature attributions.
pub fn explain_edge(
    model: &EGraphSageModel,
    graph: &ProvenanceGraph,
    edge_id: &str,
    hops: usize,
    config: &EdgeExplainConfig,
) -> Result<SubgraphExplanation> {
    let sub = graph.khop_subgraph(edge_id, hops)?;
    let local = sub.edge_position(edge_id).expect("k-hop subgraph keeps the queried edge");
    let tensors = GraphTensors::from_graph(&sub)?;
    let probs = model.forward(&tensors, Mode::Infer, None)?.probabilities;
    let classes: Vec<usize> = probs.chunks_exact(NUM_CLASSES).map(argmax).collect();
    let class = classes[local];

    let (node_dim, edge_dim) = (tensors.node_dim, tensors.edge_dim);
    let target = EdgeScore::new(model, tensors, local, class)?;
    let x = target.input();
    let shap = gradient_shap(&target, &x, &GradientShapConfig::new(config.samples, vec![0.0; x.len()], config.seed))?;
    let (node_phi, edge_phi) = shap.phi.split_at(sub.node_count() * node_dim);
    let node_raw: Vec<f64> = node_phi.chunks(node_dim).map(|c| c.iter().sum::<f64>().abs()).collect();
    let edge_raw: Vec<f64> = edge_phi.chunks(edge_dim.max(1)).map(|c| c.iter().sum::<f64>().abs()).collect();
    let node_scores = normalize_scores(&node_raw);
    let edge_scores = normalize_scores(&edge_raw);

    let (s, d) = sub.endpoints()[local];
    let center = if node_scores[d] > node_scores[s] { d } else { s };
    Ok(SubgraphExplanation {
        edge_id: edge_id.to_string(),
        predicted_class: class as u8,
        probability: shap.f_x,
        baseline_value: shap.phi0,
        center: sub.nodes()[center].id.clone(),
        hops,
        mode: shap.mode,
        seed: config.seed,
        nodes: sub.nodes().iter().zip(&node_scores).map(|(n, &score)| ScoredNode { id: n.id.clone(), score }).collect(),
        edges: sub
            .edges()
            .iter()
            .zip(&edge_scores)
            .zip(&classes)
            .map(|((e, &score), &c)| ScoredEdge {
                id: e.id.clone(),
                src: e.src.clone(),
                dst: e.dst.clone(),
                class: c as u8,
                score,
            })
            .collect(),
    })
}
