//! Central finite-difference checks for the two detector architectures.

use fedhunter_core::detectors::{CnnGruConfig, CnnGruModel, EGraphSageConfig, EGraphSageModel, GraphTensors};
use fedhunter_core::nn::{is_trainable, Mode, Parameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
/// Probes closer than this to a ReLU kink or max-pool tie are redrawn.
pub const KINK_MARGIN: f64 = 1e-4;
const SAMPLED_COORDS: usize = 24;

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn central(f: impl Fn(f64) -> f64) -> f64 {
    (f(STEP) - f(-STEP)) / (2.0 * STEP)
}

/// Flat (tensor, element) addresses of every trainable parameter.
fn trainable_coords<M: Parameters>(model: &M) -> Vec<(usize, usize)> {
    model
        .tensors()
        .iter()
        .enumerate()
        .filter(|(_, (name, _))| is_trainable(name))
        .flat_map(|(t, (_, tensor))| (0..tensor.len()).map(move |i| (t, i)))
        .collect()
}

fn perturbed<M: Parameters + Clone>(model: &M, coords: &[(usize, usize)], direction: &[f64], scale: f64) -> M {
    let mut m = model.clone();
    {
        let mut tensors = m.tensors_mut();
        for (&(t, i), d) in coords.iter().zip(direction) {
            tensors[t].1.data_mut()[i] += scale * d;
        }
    }
    m
}

fn gather<M: Parameters>(grads: &M, coords: &[(usize, usize)]) -> Vec<f64> {
    let tensors = grads.tensors();
    coords.iter().map(|&(t, i)| tensors[t].1.data()[i]).collect()
}

fn unit_direction(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Parameter checks shared by both models: one random directional
/// derivative over all trainable parameters plus a sample of coordinates.
fn parameter_errors<M: Parameters + Clone>(
    model: &M,
    grads: &M,
    loss: &dyn Fn(&M) -> f64,
    rng: &mut ChaCha8Rng,
) -> [f64; 2] {
    let coords = trainable_coords(model);
    let all_grads = gather(grads, &coords);
    let u = unit_direction(coords.len(), rng);
    let analytic_dir: f64 = all_grads.iter().zip(&u).map(|(g, d)| g * d).sum();
    let numeric_dir = central(|h| loss(&perturbed(model, &coords, &u, h)));
    let picks: Vec<(usize, usize)> = (0..SAMPLED_COORDS).map(|_| coords[rng.gen_range(0..coords.len())]).collect();
    let analytic = gather(grads, &picks);
    let numeric: Vec<f64> = picks.iter().map(|&c| central(|h| loss(&perturbed(model, &[c], &[1.0], h)))).collect();
    [relative_error(&[analytic_dir], &[numeric_dir]), relative_error(&analytic, &numeric)]
}

fn jitter<M: Parameters>(model: &mut M, rng: &mut ChaCha8Rng, scale: f64) {
    for (name, t) in model.tensors_mut() {
        let running_var = name.ends_with("running_var");
        for v in t.data_mut() {
            *v += rng.gen_range(-scale..scale);
            if running_var {
                *v = v.abs() + 0.1;
            }
        }
    }
}

/// One probe of the full CNN&GRU architecture. Returns the worst relative
/// error over input gradients, a parameter directional derivative and
/// sampled parameter coordinates.
pub fn cnn_gru_probe(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = CnnGruModel::new(CnnGruConfig::default(), seed);
    jitter(&mut model, &mut rng, 0.05);
    let mode = if seed % 2 == 0 { Mode::Train } else { Mode::Infer };
    let batch = 3;
    let weights: Vec<f64> = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |m: &CnnGruModel, x: &[f64]| -> f64 {
        let c = m.forward(x, batch, mode).unwrap();
        c.probabilities.iter().zip(&weights).map(|(p, w)| p * w).sum()
    };
    let (x, cache) = loop {
        let x: Vec<f64> = (0..batch * 10).map(|_| rng.gen::<f64>()).collect();
        let cache = model.forward(&x, batch, mode).unwrap();
        if cache.kink_margin >= KINK_MARGIN {
            break (x, cache);
        }
    };
    let (dx, grads) = model.backward(&cache, &weights).unwrap();
    let numeric_dx: Vec<f64> = (0..x.len())
        .map(|i| {
            central(|h| {
                let mut xp = x.clone();
                xp[i] += h;
                loss(&model, &xp)
            })
        })
        .collect();
    let input_err = relative_error(&dx, &numeric_dx);
    let [dir_err, coord_err] = parameter_errors(&model, &grads, &|m| loss(m, &x), &mut rng);
    input_err.max(dir_err).max(coord_err)
}

pub fn random_graph(nodes: usize, edges: usize, dim: usize, rng: &mut ChaCha8Rng) -> GraphTensors {
    let scale = 1.0 / (dim as f64).sqrt();
    let nf = (0..nodes * dim).map(|_| rng.gen_range(-2.0..2.0) * scale).collect();
    let ef = (0..edges * dim).map(|_| rng.gen_range(-2.0..2.0) * scale).collect();
    let endpoints = (0..edges).map(|_| (rng.gen_range(0..nodes), rng.gen_range(0..nodes))).collect();
    let labels = (0..edges).map(|_| rng.gen_range(0..2)).collect();
    GraphTensors::new(dim, dim, nf, ef, endpoints, labels).unwrap()
}

/// One probe of the full E-GraphSAGE architecture; same error measure as
/// [`cnn_gru_probe`], with node and edge features as inputs.
pub fn egraphsage_probe(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = EGraphSageConfig::default();
    let mut model = EGraphSageModel::new(config.clone(), seed);
    jitter(&mut model, &mut rng, 0.01);
    let (nodes, edges) = (7, 10);
    let dim = config.node_dim;
    let (g, mask, cache) = loop {
        let g = random_graph(nodes, edges, dim, &mut rng);
        let mask: Vec<f64> =
            (0..nodes * config.embedding_dim()).map(|_| if rng.gen::<f64>() < 0.2 { 0.0 } else { 1.25 }).collect();
        let mode = if seed % 2 == 0 { Mode::Train } else { Mode::Infer };
        let cache = model.forward(&g, mode, Some(&mask)).unwrap();
        if cache.kink_margin >= KINK_MARGIN {
            break (g, (mode, mask), cache);
        }
    };
    let (mode, mask) = mask;
    let weights: Vec<f64> = (0..edges * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |m: &EGraphSageModel, g: &GraphTensors| -> f64 {
        let c = m.forward(g, mode, Some(&mask)).unwrap();
        c.probabilities.iter().zip(&weights).map(|(p, w)| p * w).sum()
    };
    let (dnode, dedge, grads) = model.backward(&g, &cache, &weights).unwrap();

    let total = g.node_features.len() + g.edge_features.len();
    let analytic_all: Vec<f64> = dnode.iter().chain(&dedge).copied().collect();
    let with_input = |offsets: &[(usize, f64)]| {
        let mut nf = g.node_features.clone();
        let mut ef = g.edge_features.clone();
        for &(i, d) in offsets {
            if i < nf.len() {
                nf[i] += d;
            } else {
                ef[i - nf.len()] += d;
            }
        }
        g.with_features(nf, ef).unwrap()
    };
    let u = unit_direction(total, &mut rng);
    let analytic_dir: f64 = analytic_all.iter().zip(&u).map(|(a, b)| a * b).sum();
    let numeric_dir =
        central(|h| loss(&model, &with_input(&u.iter().enumerate().map(|(i, d)| (i, d * h)).collect::<Vec<_>>())));
    let picks: Vec<usize> = (0..SAMPLED_COORDS).map(|_| rng.gen_range(0..total)).collect();
    let analytic: Vec<f64> = picks.iter().map(|&i| analytic_all[i]).collect();
    let numeric: Vec<f64> = picks.iter().map(|&i| central(|h| loss(&model, &with_input(&[(i, h)])))).collect();
    let input_err = relative_error(&[analytic_dir], &[numeric_dir]).max(relative_error(&analytic, &numeric));
    let [dir_err, coord_err] = parameter_errors(&model, &grads, &|m| loss(m, &g), &mut rng);
    input_err.max(dir_err).max(coord_err)
}
