use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ExplainMode, Predictor, ShapExplanation};
use crate::error::{Error, Result};

/// Largest feature count for full `2^M` enumeration.
pub const MAX_EXACT_FEATURES: usize = 20;

const RIDGE: f64 = 1e-10;
/// Masked rows evaluated per predictor call.
const ROWS_PER_CALL: usize = 1 << 16;

/// A set of "present" features.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coalition {
    mask: Vec<bool>,
}

impl Coalition {
    pub fn new(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn from_bits(bits: u64, m: usize) -> Self {
        Self { mask: (0..m).map(|i| bits >> i & 1 == 1).collect() }
    }

    pub fn bits(&self) -> u64 {
        self.mask.iter().enumerate().filter(|(_, &b)| b).fold(0, |acc, (i, _)| acc | 1 << i)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn size(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Background data for imputing absent features: an absent feature takes the
/// background sample's value, and the masked output is averaged over all
/// background samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskingConfig {
    dim: usize,
    background: Vec<f64>,
}

impl MaskingConfig {
    pub fn new(background: &[Vec<f64>]) -> Result<Self> {
        let dim = background.first().map(Vec::len).ok_or_else(|| Error::Explain("background set is empty".into()))?;
        if dim == 0 {
            return Err(Error::Explain("background rows have no features".into()));
        }
        if let Some(r) = background.iter().find(|r| r.len() != dim) {
            return Err(Error::dim("background row", dim, r.len()));
        }
        Ok(Self { dim, background: background.concat() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.background.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.background.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.background.chunks_exact(self.dim)
    }

    /// Per-feature background mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|a| *a /= self.len() as f64);
        m
    }

    /// Masked expectation `v(z) = mean_b f(z ? x : b)` for every coalition bitmask.
    pub fn values(&self, f: &dyn Predictor, x: &[f64], masks: &[u64]) -> Result<Vec<f64>> {
        if f.dim() != self.dim || x.len() != self.dim {
            return Err(Error::dim("explained instance", self.dim, format!("{} (model {})", x.len(), f.dim())));
        }
        let b = self.len();
        let per_call = (ROWS_PER_CALL / b).max(1);
        let mut out = Vec::with_capacity(masks.len());
        for chunk in masks.chunks(per_call) {
            let mut rows = Vec::with_capacity(chunk.len() * b * self.dim);
            for &mask in chunk {
                for bg in self.rows() {
                    rows.extend((0..self.dim).map(|i| if mask >> i & 1 == 1 { x[i] } else { bg[i] }));
                }
            }
            let y = f.predict(&rows)?;
            out.extend(y.chunks_exact(b).map(|c| c.iter().sum::<f64>() / b as f64));
        }
        Ok(out)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel `(M − 1) / (C(M, s) · s · (M − s))` for a coalition of size `s`.
pub fn shapley_kernel_weight(m: usize, s: usize) -> f64 {
    if s == 0 || s >= m {
        return f64::INFINITY;
    }
    (m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64)
}

fn check_dim(f: &dyn Predictor, x: &[f64], masking: &MaskingConfig) -> Result<usize> {
    let m = x.len();
    if m == 0 {
        return Err(Error::Explain("cannot explain an instance with no features".into()));
    }
    if masking.dim() != m || f.dim() != m {
        return Err(Error::dim("explained instance", masking.dim(), m));
    }
    Ok(m)
}

/// Exact Shapley values by enumerating all `2^M` coalitions.
pub fn shapley_exact(f: &dyn Predictor, x: &[f64], masking: &MaskingConfig) -> Result<ShapExplanation> {
    let m = check_dim(f, x, masking)?;
    if m > MAX_EXACT_FEATURES {
        return Err(Error::Explain(format!(
            "{m} features exceed the exact enumeration limit of {MAX_EXACT_FEATURES}; use kernel_shap"
        )));
    }
    let masks: Vec<u64> = (0..1u64 << m).collect();
    let v = masking.values(f, x, &masks)?;
    // s!(M−s−1)!/M! = 1 / (M · C(M−1, s))
    let w: Vec<f64> = (0..m).map(|s| 1.0 / (m as f64 * binomial(m - 1, s))).collect();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1u64 << i;
        for s in masks.iter().filter(|&&s| s & bit == 0) {
            *p += w[s.count_ones() as usize] * (v[(s | bit) as usize] - v[*s as usize]);
        }
    }
    let f_x = f.predict(x)?[0];
    Ok(ShapExplanation::new(v[0], phi, f_x, ExplainMode::Exact, None))
}

/// KernelSHAP: Shapley-kernel weighted least squares with the empty and full
/// coalitions as hard constraints.
///
/// All proper coalitions are used when `2^M ≤ budget`; otherwise `budget`
/// coalitions are drawn, stratified by size in proportion to the kernel mass
/// of each size.
pub fn kernel_shap(
    f: &dyn Predictor,
    x: &[f64],
    masking: &MaskingConfig,
    budget: usize,
    seed: u64,
) -> Result<ShapExplanation> {
    let m = check_dim(f, x, masking)?;
    let phi0 = masking.values(f, x, &[0])?[0];
    let f_x = f.predict(x)?[0];
    if m == 1 {
        return Ok(ShapExplanation::new(phi0, vec![f_x - phi0], f_x, ExplainMode::KernelFull, None));
    }
    let full = m < 63 && (1u64 << m) as u128 <= budget as u128;
    let (masks, weights, mode, used_seed) = if full {
        let masks: Vec<u64> = (1..(1u64 << m) - 1).collect();
        let weights = masks.iter().map(|s| shapley_kernel_weight(m, s.count_ones() as usize)).collect();
        (masks, weights, ExplainMode::KernelFull, None)
    } else {
        if m > 64 {
            return Err(Error::Explain(format!("{m} features exceed the 64-feature coalition limit")));
        }
        let (masks, weights) = sample_coalitions(m, budget.max(m), seed);
        (masks, weights, ExplainMode::KernelSampled, Some(seed))
    };
    let v = masking.values(f, x, &masks)?;

    // Eliminate the last coefficient with φ_{M−1} = (f_x − φ0) − Σ_{j<M−1} φ_j.
    let p = m - 1;
    let total = f_x - phi0;
    let mut ata = DMatrix::<f64>::zeros(p, p);
    let mut aty = DVector::<f64>::zeros(p);
    let mut a = vec![0.0; p];
    for ((&mask, &w), &vz) in masks.iter().zip(&weights).zip(&v) {
        let last = (mask >> p & 1) as f64;
        for (j, aj) in a.iter_mut().enumerate() {
            *aj = (mask >> j & 1) as f64 - last;
        }
        let y = vz - phi0 - last * total;
        for j in 0..p {
            if a[j] == 0.0 {
                continue;
            }
            aty[j] += w * a[j] * y;
            for k in 0..p {
                ata[(j, k)] += w * a[j] * a[k];
            }
        }
    }
    let (beta, ridge_fallback) = solve_normal(ata, aty)?;
    let mut phi: Vec<f64> = beta.iter().copied().collect();
    phi.push(total - phi.iter().sum::<f64>());
    let mut e = ShapExplanation::new(phi0, phi, f_x, mode, used_seed);
    e.ridge_fallback = ridge_fallback;
    Ok(e)
}

fn solve_normal(ata: DMatrix<f64>, aty: DVector<f64>) -> Result<(DVector<f64>, bool)> {
    if let Some(chol) = ata.clone().cholesky() {
        let beta = chol.solve(&aty);
        if beta.iter().all(|v| v.is_finite()) {
            return Ok((beta, false));
        }
    }
    log::warn!("singular KernelSHAP system; adding ridge {RIDGE:e}");
    let n = ata.nrows();
    let regularized = ata + DMatrix::<f64>::identity(n, n) * RIDGE;
    let beta = regularized
        .clone()
        .cholesky()
        .map(|c| c.solve(&aty))
        .or_else(|| regularized.lu().solve(&aty))
        .ok_or_else(|| Error::Explain("KernelSHAP regression is singular even with ridge".into()))?;
    Ok((beta, true))
}

/// Stratified coalition sample; each draw in size stratum `s` carries weight
/// `mass_s / n_s` so the total kernel mass per size is preserved.
fn sample_coalitions(m: usize, budget: usize, seed: u64) -> (Vec<u64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mass: Vec<f64> = (1..m).map(|s| (m - 1) as f64 / (s * (m - s)) as f64).collect();
    let total: f64 = mass.iter().sum();
    let mut masks = Vec::with_capacity(budget);
    let mut weights = Vec::with_capacity(budget);
    for (k, &ms) in mass.iter().enumerate() {
        let s = k + 1;
        let n_s = ((budget as f64 * ms / total).round() as usize).max(1);
        for _ in 0..n_s {
            let bits = sample(&mut rng, m, s).into_iter().fold(0u64, |acc, i| acc | 1 << i);
            masks.push(bits);
            weights.push(ms / n_s as f64);
        }
    }
    (masks, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::FnPredictor;
    use proptest::prelude::*;

    fn linear(a: Vec<f64>) -> FnPredictor<impl Fn(&[f64]) -> f64 + Sync> {
        let m = a.len();
        FnPredictor::new(m, move |x: &[f64]| x.iter().zip(&a).map(|(x, a)| x * a).sum())
    }

    #[test]
    fn coalition_bits_round_trip() {
        let c = Coalition::from_bits(0b1011, 5);
        assert_eq!(c.size(), 3);
        assert_eq!(c.bits(), 0b1011);
        assert_eq!(c.mask(), &[true, true, false, true, false]);
    }

    #[test]
    fn kernel_weights() {
        // M = 4, s = 1: 3 / (4 · 1 · 3)
        assert!((shapley_kernel_weight(4, 1) - 0.25).abs() < 1e-15);
        assert!((shapley_kernel_weight(4, 2) - 3.0 / (6.0 * 4.0)).abs() < 1e-15);
        assert!(shapley_kernel_weight(4, 0).is_infinite());
    }

    #[test]
    fn constant_model() {
        let f = FnPredictor::new(3, |_: &[f64]| 2.5);
        let bg = MaskingConfig::new(&[vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let e = shapley_exact(&f, &[0.3, 0.4, 0.5], &bg).unwrap();
        assert_eq!(e.phi0, 2.5);
        assert!(e.phi.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn linear_single_background() {
        let f = linear(vec![1.0, -2.0, 0.5]);
        let bg = MaskingConfig::new(&[vec![0.2, 0.1, 0.9]]).unwrap();
        let x = [1.0, 0.5, 0.0];
        for e in [shapley_exact(&f, &x, &bg).unwrap(), kernel_shap(&f, &x, &bg, 1 << 10, 0).unwrap()] {
            assert!((e.phi[0] - 0.8).abs() < 1e-12);
            assert!((e.phi[1] - -0.8).abs() < 1e-12);
            assert!((e.phi[2] - -0.45).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_players() {
        let f = FnPredictor::new(3, |x: &[f64]| x[0] * x[1] + x[2]);
        let bg = MaskingConfig::new(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let e = shapley_exact(&f, &[2.0, 2.0, 1.0], &bg).unwrap();
        assert!((e.phi[0] - e.phi[1]).abs() < 1e-15);
        assert!((e.phi[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exact_rejects_large_m() {
        let f = FnPredictor::new(21, |_: &[f64]| 0.0);
        let bg = MaskingConfig::new(&[vec![0.0; 21]]).unwrap();
        assert!(matches!(shapley_exact(&f, &[0.0; 21], &bg), Err(Error::Explain(_))));
    }

    #[test]
    fn sampled_kernel_is_close_for_linear_models() {
        let a: Vec<f64> = (0..14).map(|i| (i as f64 - 6.0) / 3.0).collect();
        let f = linear(a.clone());
        let bg = MaskingConfig::new(&[vec![0.1; 14], vec![0.3; 14]]).unwrap();
        let x = vec![0.9; 14];
        let e = kernel_shap(&f, &x, &bg, 2000, 4).unwrap();
        assert_eq!(e.mode, ExplainMode::KernelSampled);
        for (p, a) in e.phi.iter().zip(&a) {
            assert!((p - a * 0.7).abs() < 1e-9, "{p} vs {}", a * 0.7);
        }
        assert!(e.completeness_gap().abs() < 1e-12);
    }

    #[test]
    fn duplicate_columns_trigger_ridge() {
        // an all-zero normal matrix has no Cholesky factor
        let ata = DMatrix::<f64>::zeros(2, 2);
        let (beta, ridge) = solve_normal(ata, DVector::zeros(2)).unwrap();
        assert!(ridge);
        assert!(beta.iter().all(|v| *v == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn full_kernel_matches_exact(
            m in 1usize..=10,
            coef in proptest::collection::vec(-2.0f64..2.0, 10),
            bgs in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 10), 1..4),
            x in proptest::collection::vec(-1.0f64..1.0, 10),
        ) {
            let c = coef[..m].to_vec();
            let f = FnPredictor::new(m, move |v: &[f64]| {
                let lin: f64 = v.iter().zip(&c).map(|(a, b)| a * b).sum();
                lin.tanh() + v[0] * v[m - 1]
            });
            let bg: Vec<Vec<f64>> = bgs.iter().map(|r| r[..m].to_vec()).collect();
            let bg = MaskingConfig::new(&bg).unwrap();
            let exact = shapley_exact(&f, &x[..m], &bg).unwrap();
            let kernel = kernel_shap(&f, &x[..m], &bg, 1 << m, 0).unwrap();
            prop_assert_eq!(kernel.mode, ExplainMode::KernelFull);
            prop_assert!((exact.phi0 - kernel.phi0).abs() <= 1e-12);
            for (a, b) in exact.phi.iter().zip(&kernel.phi) {
                prop_assert!((a - b).abs() <= 1e-6, "{} vs {}", a, b);
            }
            prop_assert!(exact.completeness_gap().abs() <= 1e-6);
            prop_assert!(kernel.completeness_gap().abs() <= 1e-6);
        }

        #[test]
        fn null_player(x in proptest::collection::vec(0.0f64..1.0, 4), b in proptest::collection::vec(0.0f64..1.0, 4)) {
            let f = FnPredictor::new(4, |v: &[f64]| (v[0] * 3.0).sin() + v[1] * v[2]);
            let bg = MaskingConfig::new(&[b]).unwrap();
            let e = shapley_exact(&f, &x, &bg).unwrap();
            prop_assert!(e.phi[3].abs() <= 1e-8);
            prop_assert!(e.completeness_gap().abs() <= 1e-6);
        }

        #[test]
        fn additivity(x in proptest::collection::vec(0.0f64..1.0, 5), bgs in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 5), 1..4)) {
            let f1 = FnPredictor::new(5, |v: &[f64]| v[0] * v[1] - v[4]);
            let f2 = FnPredictor::new(5, |v: &[f64]| (v[2] + v[3]).exp());
            let f12 = FnPredictor::new(5, |v: &[f64]| v[0] * v[1] - v[4] + (v[2] + v[3]).exp());
            let bg = MaskingConfig::new(&bgs).unwrap();
            let (e1, e2, e12) = (
                kernel_shap(&f1, &x, &bg, 64, 0).unwrap(),
                kernel_shap(&f2, &x, &bg, 64, 0).unwrap(),
                kernel_shap(&f12, &x, &bg, 64, 0).unwrap(),
            );
            for i in 0..5 {
                prop_assert!((e1.phi[i] + e2.phi[i] - e12.phi[i]).abs() <= 1e-6);
            }
        }
    }
}
