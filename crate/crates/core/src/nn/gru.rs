//! Gated recurrent unit returning the final hidden state.
//!
//! Gate blocks are laid out `[update | reset | candidate]` along the last axis:
//!
//! ```text
//! z  = σ(x·Wz + h·Uz + bz)
//! r  = σ(x·Wr + h·Ur + br)
//! n  = tanh(x·Wn + (r ⊙ h)·Un + bn)
//! h' = z ⊙ h + (1 − z) ⊙ n
//! ```

use rand::Rng;

use super::layers::sigmoid;
use super::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    /// `[input, 3·units]`
    pub input_weight: Tensor,
    /// `[units, 3·units]`
    pub recurrent_weight: Tensor,
    /// `[3·units]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    x: Vec<f64>,
    batch: usize,
    steps: usize,
    /// Per step: `(h_prev, z, r, n)`, each `[batch, units]`.
    states: Vec<[Vec<f64>; 4]>,
}

impl Gru {
    pub fn new(input: usize, units: usize, rng: &mut impl Rng) -> Self {
        Self {
            input_weight: Tensor::glorot(&[input, 3 * units], input, 3 * units, rng),
            recurrent_weight: Tensor::glorot(&[units, 3 * units], units, 3 * units, rng),
            bias: Tensor::zeros(&[3 * units]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_weight.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.recurrent_weight.shape()[0]
    }

    /// `x` is `[batch, steps, input]`; returns the final hidden state `[batch, units]`.
    pub fn forward(&self, x: &[f64], batch: usize, steps: usize) -> (Vec<f64>, GruCache) {
        let (d, u) = (self.input_dim(), self.units());
        let (wx, wh, b) = (self.input_weight.data(), self.recurrent_weight.data(), self.bias.data());
        let g = 3 * u;
        let mut h = vec![0.0; batch * u];
        let mut states = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut z = vec![0.0; batch * u];
            let mut r = vec![0.0; batch * u];
            let mut n = vec![0.0; batch * u];
            let mut next = vec![0.0; batch * u];
            for bi in 0..batch {
                let xt = &x[(bi * steps + t) * d..(bi * steps + t + 1) * d];
                let hp = &h[bi * u..(bi + 1) * u];
                for j in 0..u {
                    let (mut az, mut ar, mut an) = (b[j], b[u + j], b[2 * u + j]);
                    for (k, &xv) in xt.iter().enumerate() {
                        az += xv * wx[k * g + j];
                        ar += xv * wx[k * g + u + j];
                        an += xv * wx[k * g + 2 * u + j];
                    }
                    for (k, &hv) in hp.iter().enumerate() {
                        az += hv * wh[k * g + j];
                        ar += hv * wh[k * g + u + j];
                    }
                    z[bi * u + j] = sigmoid(az);
                    r[bi * u + j] = sigmoid(ar);
                    // candidate needs the complete reset vector, finished below
                    n[bi * u + j] = an;
                }
                for j in 0..u {
                    let mut an = n[bi * u + j];
                    for k in 0..u {
                        an += r[bi * u + k] * hp[k] * wh[k * g + 2 * u + j];
                    }
                    let nv = an.tanh();
                    n[bi * u + j] = nv;
                    let zv = z[bi * u + j];
                    next[bi * u + j] = zv * hp[j] + (1.0 - zv) * nv;
                }
            }
            states.push([std::mem::replace(&mut h, next), z, r, n]);
        }
        (h, GruCache { x: x.to_vec(), batch, steps, states })
    }

    pub fn backward(&self, cache: &GruCache, dh_last: &[f64], grad: &mut Gru) -> Vec<f64> {
        let (d, u) = (self.input_dim(), self.units());
        let g = 3 * u;
        let (wx, wh) = (self.input_weight.data(), self.recurrent_weight.data());
        let (batch, steps) = (cache.batch, cache.steps);
        let mut dx = vec![0.0; cache.x.len()];
        let mut dh = dh_last.to_vec();
        for t in (0..steps).rev() {
            let [hp, z, r, n] = &cache.states[t];
            let mut dh_prev = vec![0.0; batch * u];
            for bi in 0..batch {
                let o = bi * u;
                let xt = &cache.x[(bi * steps + t) * d..(bi * steps + t + 1) * d];
                let mut da_z = vec![0.0; u];
                let mut da_n = vec![0.0; u];
                for j in 0..u {
                    let dhj = dh[o + j];
                    let (zj, nj) = (z[o + j], n[o + j]);
                    dh_prev[o + j] += dhj * zj;
                    da_z[j] = dhj * (hp[o + j] - nj) * zj * (1.0 - zj);
                    da_n[j] = dhj * (1.0 - zj) * (1.0 - nj * nj);
                }
                // through (r ⊙ h)·Un
                let mut da_r = vec![0.0; u];
                for k in 0..u {
                    let mut d_rh = 0.0;
                    for j in 0..u {
                        d_rh += da_n[j] * wh[k * g + 2 * u + j];
                        grad.recurrent_weight.data_mut()[k * g + 2 * u + j] += r[o + k] * hp[o + k] * da_n[j];
                    }
                    dh_prev[o + k] += d_rh * r[o + k];
                    da_r[k] = d_rh * hp[o + k] * r[o + k] * (1.0 - r[o + k]);
                }
                let blocks = [(0, &da_z), (u, &da_r), (2 * u, &da_n)];
                for (off, da) in blocks {
                    for j in 0..u {
                        grad.bias.data_mut()[off + j] += da[j];
                        for (k, &xv) in xt.iter().enumerate() {
                            grad.input_weight.data_mut()[k * g + off + j] += xv * da[j];
                            dx[(bi * steps + t) * d + k] += da[j] * wx[k * g + off + j];
                        }
                    }
                }
                for (off, da) in [(0, &da_z), (u, &da_r)] {
                    for k in 0..u {
                        for j in 0..u {
                            grad.recurrent_weight.data_mut()[k * g + off + j] += hp[o + k] * da[j];
                            dh_prev[o + k] += da[j] * wh[k * g + off + j];
                        }
                    }
                }
            }
            dh = dh_prev;
        }
        dx
    }
}
