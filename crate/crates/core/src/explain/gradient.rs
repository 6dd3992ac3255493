use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Differentiable, ExplainMode, MaskingConfig, ShapExplanation};
use crate::error::{Error, Result};

/// Input values handed to one `value_and_grad` call.
const VALUES_PER_CALL: usize = 1 << 20;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// `φ_i = (x_i − x̄_i) · mean_j ∂f/∂x_i(x^j)`.
    #[default]
    ExpectedGradients,
    /// `φ_i = w_i · mean_j ∂f/∂x_i(x^j)` with `w_i = (x_i − x̄_i) / Σ_k (x_k − x̄_k)`.
    /// Does not satisfy completeness in general.
    NormalizedWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientShapConfig {
    pub samples: usize,
    pub baseline: Vec<f64>,
    #[serde(default)]
    pub mode: GradientMode,
    pub seed: u64,
}

impl GradientShapConfig {
    pub fn new(samples: usize, baseline: Vec<f64>, seed: u64) -> Self {
        Self { samples, baseline, mode: GradientMode::default(), seed }
    }

    /// Baseline = background mean.
    pub fn from_background(masking: &MaskingConfig, samples: usize, seed: u64) -> Self {
        Self::new(samples, masking.mean(), seed)
    }

    pub fn with_mode(mut self, mode: GradientMode) -> Self {
        self.mode = mode;
        self
    }
}

/// `w_i = (x_i − x̄_i) / Σ_k (x_k − x̄_k)`.
pub fn normalized_weights(x: &[f64], baseline: &[f64]) -> Result<Vec<f64>> {
    if x.len() != baseline.len() {
        return Err(Error::dim("gradient baseline", x.len(), baseline.len()));
    }
    let total: f64 = x.iter().zip(baseline).map(|(a, b)| a - b).sum();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::Explain(format!(
            "normalized-weight mode needs Σ(x − baseline) ≠ 0, got {total}"
        )));
    }
    Ok(x.iter().zip(baseline).map(|(a, b)| (a - b) / total).collect())
}

/// GradientSHAP: input gradients averaged over `samples` seeded points on the
/// segment from the baseline to `x`.
pub fn gradient_shap(f: &dyn Differentiable, x: &[f64], config: &GradientShapConfig) -> Result<ShapExplanation> {
    let m = f.dim();
    if x.len() != m || config.baseline.len() != m {
        return Err(Error::dim("gradient_shap input", m, format!("{} (baseline {})", x.len(), config.baseline.len())));
    }
    if config.samples == 0 {
        return Err(Error::InvalidArgument("gradient_shap needs at least one sample".into()));
    }
    let base = &config.baseline;
    let mode = match config.mode {
        GradientMode::ExpectedGradients => ExplainMode::ExpectedGradients,
        GradientMode::NormalizedWeights => ExplainMode::NormalizedWeights,
    };
    let phi0 = f.predict(base)?[0];
    let f_x = f.predict(x)?[0];
    if x == base.as_slice() {
        return Ok(ShapExplanation::new(phi0, vec![0.0; m], f_x, mode, Some(config.seed)));
    }
    let weights = match config.mode {
        GradientMode::ExpectedGradients => x.iter().zip(base).map(|(a, b)| a - b).collect(),
        GradientMode::NormalizedWeights => normalized_weights(x, base)?,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let alphas: Vec<f64> = (0..config.samples).map(|_| rng.gen::<f64>()).collect();
    let per_call = (VALUES_PER_CALL / m).max(1);
    let mut grad_sum = vec![0.0; m];
    for chunk in alphas.chunks(per_call) {
        let mut rows = Vec::with_capacity(chunk.len() * m);
        for &a in chunk {
            rows.extend(x.iter().zip(base).map(|(xi, bi)| bi + a * (xi - bi)));
        }
        let (_, grads) = f.value_and_grad(&rows)?;
        for g in grads.chunks_exact(m) {
            for (s, v) in grad_sum.iter_mut().zip(g) {
                *s += v;
            }
        }
    }
    let n = config.samples as f64;
    let phi: Vec<f64> = grad_sum.iter().zip(&weights).map(|(g, w)| w * g / n).collect();
    if let Some(i) = phi.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!("gradient_shap attribution for feature {i}")));
    }
    Ok(ShapExplanation::new(phi0, phi, f_x, mode, Some(config.seed)))
}
