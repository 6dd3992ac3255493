//! Shapley-value attribution: exact enumeration, KernelSHAP, GradientSHAP,
//! and node-centered subgraph explanations for edge predictions.

mod gradient;
mod shapley;
mod subgraph;

pub use gradient::{gradient_shap, normalized_weights, GradientMode, GradientShapConfig};
pub use shapley::{kernel_shap, shapley_exact, shapley_kernel_weight, Coalition, MaskingConfig, MAX_EXACT_FEATURES};
pub use subgraph::{
    explain_edge, normalize_scores, EdgeExplainConfig, EdgeScore, ScoredEdge, ScoredNode, SubgraphExplanation,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::CnnGruModel;
use crate::error::{Error, Result};
use crate::nn::Mode;

/// A batch scalar model over `dim()`-wide rows.
pub trait Predictor: Sync {
    fn dim(&self) -> usize;

    /// One output per row of `rows` (`rows.len() / dim()` rows).
    fn predict(&self, rows: &[f64]) -> Result<Vec<f64>>;
}

/// A predictor that also yields input gradients.
pub trait Differentiable: Predictor {
    /// Outputs and per-row input gradients (same layout as `rows`).
    fn value_and_grad(&self, rows: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Wraps a row function as a [`Predictor`].
pub struct FnPredictor<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnPredictor<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for FnPredictor<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, rows: &[f64]) -> Result<Vec<f64>> {
        check_rows(rows, self.dim)?;
        Ok(rows.par_chunks(self.dim).map(|r| (self.f)(r)).collect())
    }
}

pub(crate) fn check_rows(rows: &[f64], dim: usize) -> Result<()> {
    if dim == 0 || rows.len() % dim != 0 {
        return Err(Error::dim("explained rows", format!("multiple of {dim}"), rows.len()));
    }
    Ok(())
}

impl Predictor for CnnGruModel {
    fn dim(&self) -> usize {
        self.config().seq_len
    }

    fn predict(&self, rows: &[f64]) -> Result<Vec<f64>> {
        self.predict_values(rows)
    }
}

impl Differentiable for CnnGruModel {
    fn value_and_grad(&self, rows: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_rows(rows, self.dim())?;
        let batch = rows.len() / self.dim();
        let cache = self.forward(rows, batch, Mode::Infer)?;
        let (dx, _) = self.backward(&cache, &vec![1.0; batch])?;
        Ok((cache.probabilities, dx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainMode {
    Exact,
    KernelFull,
    KernelSampled,
    ExpectedGradients,
    NormalizedWeights,
}

/// `f(x) ≈ phi0 + Σ phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ExplanationJson", try_from = "ExplanationJson")]
pub struct ShapExplanation {
    pub phi0: f64,
    pub phi: Vec<f64>,
    pub feature_names: Vec<String>,
    pub f_x: f64,
    pub mode: ExplainMode,
    pub seed: Option<u64>,
    /// The regression system was singular and a tiny ridge term was added.
    pub ridge_fallback: bool,
}

impl ShapExplanation {
    pub(crate) fn new(phi0: f64, phi: Vec<f64>, f_x: f64, mode: ExplainMode, seed: Option<u64>) -> Self {
        let feature_names = (0..phi.len()).map(|i| format!("x{i}")).collect();
        Self { phi0, phi, feature_names, f_x, mode, seed, ridge_fallback: false }
    }

    pub fn with_feature_names<S: ToString>(mut self, names: &[S]) -> Result<Self> {
        if names.len() != self.phi.len() {
            return Err(Error::dim("feature names", self.phi.len(), names.len()));
        }
        self.feature_names = names.iter().map(ToString::to_string).collect();
        Ok(self)
    }

    /// `f(x) − (phi0 + Σ phi)`.
    pub fn completeness_gap(&self) -> f64 {
        self.f_x - self.phi0 - self.phi.iter().sum::<f64>()
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureValue {
    feature: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct ExplanationJson {
    phi0: f64,
    phi: Vec<FeatureValue>,
    f_x: f64,
    mode: ExplainMode,
    seed: Option<u64>,
    #[serde(default)]
    ridge_fallback: bool,
}

impl From<ShapExplanation> for ExplanationJson {
    fn from(e: ShapExplanation) -> Self {
        ExplanationJson {
            phi0: e.phi0,
            phi: e.feature_names.into_iter().zip(e.phi).map(|(feature, value)| FeatureValue { feature, value }).collect(),
            f_x: e.f_x,
            mode: e.mode,
            seed: e.seed,
            ridge_fallback: e.ridge_fallback,
        }
    }
}

impl TryFrom<ExplanationJson> for ShapExplanation {
    type Error = String;

    fn try_from(j: ExplanationJson) -> std::result::Result<Self, String> {
        let (feature_names, phi) = j.phi.into_iter().map(|p| (p.feature, p.value)).unzip();
        Ok(ShapExplanation {
            phi0: j.phi0,
            phi,
            feature_names,
            f_x: j.f_x,
            mode: j.mode,
            seed: j.seed,
            ridge_fallback: j.ridge_fallback,
        })
    }
}
