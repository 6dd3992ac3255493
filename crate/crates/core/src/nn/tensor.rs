use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major float64 tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::dim("tensor", format!("{shape:?} ({n} values)"), data.len()));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    /// Glorot-uniform initialization: U(-l, l) with `l = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: (0..n).map(|_| rng.gen_range(-limit..limit)).collect() }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// View as a matrix of `rows` rows.
    pub fn as_matrix(&self) -> ArrayView2<'_, f64> {
        let cols = *self.shape.last().unwrap();
        ArrayView2::from_shape((self.data.len() / cols, cols), &self.data).unwrap()
    }
}

fn view(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("matrix view shape")
}

/// `A (m×k) · B (k×n)`.
pub fn matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    {
        let mut c = ArrayViewMut2::from_shape((m, n), &mut out).unwrap();
        ndarray::linalg::general_mat_mul(1.0, &view(a, m, k), &view(b, k, n), 0.0, &mut c);
    }
    out
}

/// `Aᵀ · B` for `A (m×k)`, `B (m×n)`, accumulated into `out (k×n)`.
pub fn matmul_tn_acc(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    let mut c = ArrayViewMut2::from_shape((k, n), out).unwrap();
    ndarray::linalg::general_mat_mul(1.0, &view(a, m, k).t(), &view(b, m, n), 1.0, &mut c);
}

/// `A (m×n) · Bᵀ` for `B (k×n)`.
pub fn matmul_nt(a: &[f64], m: usize, n: usize, b: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    {
        let mut c = ArrayViewMut2::from_shape((m, k), &mut out).unwrap();
        ndarray::linalg::general_mat_mul(1.0, &view(a, m, n), &view(b, k, n).t(), 0.0, &mut c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_invariant() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::from_vec(&[0], vec![]).is_err());
    }

    #[test]
    fn matmul_variants_agree_with_loops() {
        let a: Vec<f64> = (0..6).map(|x| x as f64 + 1.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|x| (x as f64) * 0.5 - 2.0).collect(); // 3x4
        let c = matmul(&a, 2, 3, &b, 4);
        for i in 0..2 {
            for j in 0..4 {
                let s: f64 = (0..3).map(|p| a[i * 3 + p] * b[p * 4 + j]).sum();
                assert!((c[i * 4 + j] - s).abs() < 1e-12);
            }
        }
        // aᵀ·a' where a' is 2x4
        let d: Vec<f64> = (0..8).map(|x| x as f64).collect();
        let mut acc = vec![1.0; 12];
        matmul_tn_acc(&a, 2, 3, &d, 4, &mut acc);
        for i in 0..3 {
            for j in 0..4 {
                let s: f64 = (0..2).map(|p| a[p * 3 + i] * d[p * 4 + j]).sum();
                assert!((acc[i * 4 + j] - 1.0 - s).abs() < 1e-12);
            }
        }
        // a (2x3) · eᵀ where e is 4x3
        let e: Vec<f64> = (0..12).map(|x| x as f64 * 0.1).collect();
        let f = matmul_nt(&a, 2, 3, &e, 4);
        for i in 0..2 {
            for j in 0..4 {
                let s: f64 = (0..3).map(|p| a[i * 3 + p] * e[j * 3 + p]).sum();
                assert!((f[i * 4 + j] - s).abs() < 1e-12);
            }
        }
    }
}
