//! Layer primitives with hand-written backward passes.
//!
//! Activations are passed as flat row-major slices with explicit dimensions.
//! Sequence tensors use the `[batch, length, channels]` layout. Every
//! `backward` accumulates parameter gradients into a same-shaped layer
//! (`grad`) and returns the input gradient.

use rand::Rng;

use super::tensor::{matmul, matmul_nt, matmul_tn_acc, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[in, out]`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self { weight: Tensor::glorot(&[input, output], input, output, rng), bias: Tensor::zeros(&[output]) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let (i, o) = (self.input_dim(), self.output_dim());
        let mut y = matmul(x, rows, i, self.weight.data(), o);
        for row in y.chunks_exact_mut(o) {
            for (v, b) in row.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        y
    }

    pub fn backward(&self, x: &[f64], rows: usize, dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let (i, o) = (self.input_dim(), self.output_dim());
        matmul_tn_acc(x, rows, i, dy, o, grad.weight.data_mut());
        let db = grad.bias.data_mut();
        for row in dy.chunks_exact(o) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        matmul_nt(dy, rows, o, self.weight.data(), i)
    }
}

/// 1-D convolution, stride 1, zero "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    /// `[kernel, in_channels, out_channels]`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv1d {
    pub fn new(kernel: usize, in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Tensor::glorot(
                &[kernel, in_channels, out_channels],
                kernel * in_channels,
                kernel * out_channels,
                rng,
            ),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[2]
    }

    fn pad_left(&self) -> usize {
        (self.kernel() - 1) / 2
    }

    /// Unfold `[batch, len, cin]` into `[batch*len, kernel*cin]` patches.
    pub fn im2col(&self, x: &[f64], batch: usize, len: usize) -> Vec<f64> {
        let (k, c) = (self.kernel(), self.in_channels());
        let pad = self.pad_left() as isize;
        let mut cols = vec![0.0; batch * len * k * c];
        for b in 0..batch {
            for t in 0..len {
                let row = &mut cols[(b * len + t) * k * c..(b * len + t + 1) * k * c];
                for j in 0..k {
                    let src = t as isize + j as isize - pad;
                    if src >= 0 && (src as usize) < len {
                        let s = (b * len + src as usize) * c;
                        row[j * c..(j + 1) * c].copy_from_slice(&x[s..s + c]);
                    }
                }
            }
        }
        cols
    }

    /// Returns `(output, patches)`; the patches are the backward cache.
    pub fn forward(&self, x: &[f64], batch: usize, len: usize) -> (Vec<f64>, Vec<f64>) {
        let (k, c, o) = (self.kernel(), self.in_channels(), self.out_channels());
        let cols = self.im2col(x, batch, len);
        let mut y = matmul(&cols, batch * len, k * c, self.weight.data(), o);
        for row in y.chunks_exact_mut(o) {
            for (v, b) in row.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        (y, cols)
    }

    pub fn backward(&self, cols: &[f64], batch: usize, len: usize, dy: &[f64], grad: &mut Conv1d) -> Vec<f64> {
        let (k, c, o) = (self.kernel(), self.in_channels(), self.out_channels());
        let rows = batch * len;
        matmul_tn_acc(cols, rows, k * c, dy, o, grad.weight.data_mut());
        let db = grad.bias.data_mut();
        for row in dy.chunks_exact(o) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        let dcols = matmul_nt(dy, rows, o, self.weight.data(), k * c);
        let pad = self.pad_left() as isize;
        let mut dx = vec![0.0; batch * len * c];
        for b in 0..batch {
            for t in 0..len {
                let row = &dcols[(b * len + t) * k * c..(b * len + t + 1) * k * c];
                for j in 0..k {
                    let src = t as isize + j as isize - pad;
                    if src >= 0 && (src as usize) < len {
                        let s = (b * len + src as usize) * c;
                        for ch in 0..c {
                            dx[s + ch] += row[j * c + ch];
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Batch normalization over the last axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Batch statistics; present only in training mode.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

impl BatchNorm1d {
    pub const EPS: f64 = 1e-3;
    pub const MOMENTUM: f64 = 0.99;

    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            eps: Self::EPS,
            momentum: Self::MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &[f64], rows: usize, training: bool) -> (Vec<f64>, BatchNormCache) {
        let c = self.channels();
        let (mean, var, batch_stats) = if training {
            let mut mean = vec![0.0; c];
            for row in x.chunks_exact(c) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows as f64);
            let mut var = vec![0.0; c];
            for row in x.chunks_exact(c) {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= rows as f64);
            (mean.clone(), var.clone(), Some((mean, var)))
        } else {
            (self.running_mean.data().to_vec(), self.running_var.data().to_vec(), None)
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = vec![0.0; x.len()];
        let mut y = vec![0.0; x.len()];
        for (r, row) in x.chunks_exact(c).enumerate() {
            for ch in 0..c {
                let h = (row[ch] - mean[ch]) * inv_std[ch];
                xhat[r * c + ch] = h;
                y[r * c + ch] = self.gamma.data()[ch] * h + self.beta.data()[ch];
            }
        }
        (y, BatchNormCache { xhat, inv_std, batch_stats })
    }

    pub fn backward(&self, cache: &BatchNormCache, rows: usize, dy: &[f64], grad: &mut BatchNorm1d) -> Vec<f64> {
        let c = self.channels();
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for (row, xh) in dy.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for ch in 0..c {
                sum_dy[ch] += row[ch];
                sum_dy_xhat[ch] += row[ch] * xh[ch];
            }
        }
        for ch in 0..c {
            grad.gamma.data_mut()[ch] += sum_dy_xhat[ch];
            grad.beta.data_mut()[ch] += sum_dy[ch];
        }
        let gamma = self.gamma.data();
        let mut dx = vec![0.0; dy.len()];
        let n = rows as f64;
        for (r, row) in dy.chunks_exact(c).enumerate() {
            for ch in 0..c {
                let i = r * c + ch;
                dx[i] = if cache.batch_stats.is_some() {
                    gamma[ch] * cache.inv_std[ch] / n
                        * (n * row[ch] - sum_dy[ch] - cache.xhat[i] * sum_dy_xhat[ch])
                } else {
                    gamma[ch] * cache.inv_std[ch] * row[ch]
                };
            }
        }
        dx
    }

    /// Fold batch statistics into the running averages.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if let Some((mean, var)) = &cache.batch_stats {
            let m = self.momentum;
            for (r, b) in self.running_mean.data_mut().iter_mut().zip(mean) {
                *r = m * *r + (1.0 - m) * b;
            }
            for (r, b) in self.running_var.data_mut().iter_mut().zip(var) {
                *r = m * *r + (1.0 - m) * b;
            }
        }
    }
}

/// Max pooling with window 2, stride 1 and "same" padding, so the sequence
/// length is preserved; the last position sees only itself.
pub fn maxpool_forward(x: &[f64], batch: usize, len: usize, channels: usize) -> (Vec<f64>, Vec<usize>) {
    let mut y = vec![0.0; x.len()];
    let mut arg = vec![0usize; x.len()];
    for b in 0..batch {
        for t in 0..len {
            for ch in 0..channels {
                let i = (b * len + t) * channels + ch;
                let (mut best, mut at) = (x[i], i);
                if t + 1 < len {
                    let j = i + channels;
                    if x[j] > best {
                        best = x[j];
                        at = j;
                    }
                }
                y[i] = best;
                arg[i] = at;
            }
        }
    }
    (y, arg)
}

pub fn maxpool_backward(arg: &[usize], dy: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; dy.len()];
    for (&a, &d) in arg.iter().zip(dy) {
        dx[a] += d;
    }
    dx
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient through ReLU given its output.
pub fn relu_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(&o, &d)| if o > 0.0 { d } else { 0.0 }).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax.
pub fn softmax(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, o) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (v, r) in o.iter_mut().zip(row) {
            *v = (r - m).exp();
            s += *v;
        }
        o.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask(n: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect()
}
