#![allow(dead_code)]

use std::path::PathBuf;

use ccs::nn::{Activation, Network};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let frob = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * frob {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

pub fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    let a = Array2::from_shape_fn((n, n), |_| r.random_range(-1.0..1.0));
    (&a + &a.t()) * 0.5
}

pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let diff: f64 = got.iter().zip(want).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm: f64 = want.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Central differences of logit `k` with step `h` in every coordinate.
pub fn fd_gradient(net: &Network, x: &[f64], k: usize, h: f64) -> Vec<f64> {
    let d = x.len();
    let mut probes = Array2::zeros((2 * d, d));
    for i in 0..d {
        for j in 0..d {
            probes[[2 * i, j]] = x[j];
            probes[[2 * i + 1, j]] = x[j];
        }
        probes[[2 * i, i]] += h;
        probes[[2 * i + 1, i]] -= h;
    }
    let out = net.forward_batch(probes.view()).unwrap();
    (0..d).map(|i| (out[[2 * i, k]] - out[[2 * i + 1, k]]) / (2.0 * h)).collect()
}

/// `(∇f(x + εv) - ∇f(x - εv)) / 2ε` with `ε = 1e-4 (1 + |x|_inf)`.
pub fn fd_hvp(net: &Network, x: &[f64], k: usize, v: &[f64]) -> Vec<f64> {
    let eps = 1e-4 * (1.0 + x.iter().fold(0.0f64, |m, a| m.max(a.abs())));
    let plus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + eps * b).collect();
    let minus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - eps * b).collect();
    let gp = ccs::nn::input_gradient(net, &plus, k).unwrap();
    let gm = ccs::nn::input_gradient(net, &minus, k).unwrap();
    gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect()
}

/// A sigmoid MLP with seeded random shape and weights scaled up so that the
/// hidden units leave their linear regime.
pub fn random_sigmoid_net(seed: u64) -> (Network, Vec<f64>, usize) {
    let mut r = rng(seed);
    let d = r.random_range(1..12);
    let depth = r.random_range(1..4);
    let hidden: Vec<usize> = (0..depth).map(|_| r.random_range(1..10)).collect();
    let out = r.random_range(1..5);
    let mut net = Network::mlp(d, &hidden, out, Activation::Sigmoid, r.random()).unwrap();
    let gain = r.random_range(1.0..3.0);
    for layer in net.layers_mut() {
        if let ccs::nn::LayerKind::Dense { weights, .. } = &mut layer.kind {
            weights.mapv_inplace(|w| w * gain);
        }
    }
    let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
    let k = r.random_range(0..out);
    (net, x, k)
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// MNIST IDX directory from `CCS_MNIST_DIR` or `<workspace>/data/mnist`.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("CCS_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data/mnist"));
    dir.join("train-images-idx3-ubyte").is_file().then_some(dir)
}

pub fn linear_net(w: &Array2<f64>, b: &Array1<f64>) -> Network {
    Network::new(vec![ccs::nn::Layer::dense(w.clone(), b.clone(), Activation::Identity).unwrap()]).unwrap()
}
