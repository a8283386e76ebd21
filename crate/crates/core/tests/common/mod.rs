//! Synthetic data shared by the integration tests.
#![allow(dead_code)]

use distinguish::rng::{self, StreamRng};
use distinguish::{DataMatrix, GaussianComponent, MixtureModel};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal(g: &mut StreamRng) -> f64 {
    g.sample(StandardNormal)
}

/// Draws `count` points from `N(mean, cov)` into `out`.
pub fn push_gaussian(out: &mut Vec<f64>, g: &mut StreamRng, mean: &[f64], cov: &[f64], count: usize) {
    let c = GaussianComponent::new(mean.to_vec(), cov.to_vec()).expect("valid component");
    let p = mean.len();
    let mut z = vec![0.0; p];
    let mut row = vec![0.0; p];
    for _ in 0..count {
        z.iter_mut().for_each(|v| *v = normal(g));
        c.transform_standard(&z, &mut row);
        out.extend_from_slice(&row);
    }
}

pub fn diag(d: &[f64]) -> Vec<f64> {
    let p = d.len();
    let mut m = vec![0.0; p * p];
    for (i, v) in d.iter().enumerate() {
        m[i * p + i] = *v;
    }
    m
}

/// Three equal-weight unit Gaussians at `0` and `+-(3 / sqrt(p)) * 1`, so the
/// outer centers sit at distance 3 from the middle one.
pub fn three_gaussians(p: usize) -> MixtureModel {
    let d = 3.0 / (p as f64).sqrt();
    let comps = [-d, 0.0, d]
        .iter()
        .map(|&m| GaussianComponent::new(vec![m; p], diag(&vec![1.0; p])).unwrap())
        .collect();
    MixtureModel::new(vec![1.0 / 3.0; 3], comps).unwrap()
}

/// A random valid mixture: uniform means, `B B^T / p + 0.2 I` covariances and
/// weights bounded away from zero.
pub fn random_mixture(kappa: usize, p: usize, seed: u64) -> MixtureModel {
    let mut g = rng::stream(seed, "random-mixture", 0);
    let raw: Vec<f64> = (0..kappa).map(|_| 0.2 + g.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let comps = (0..kappa)
        .map(|_| {
            let mean: Vec<f64> = (0..p).map(|_| g.random_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..p * p).map(|_| normal(&mut g)).collect();
            let mut cov = vec![0.0; p * p];
            for i in 0..p {
                for j in 0..p {
                    let s: f64 = (0..p).map(|k| b[i * p + k] * b[j * p + k]).sum();
                    cov[i * p + j] = s / p as f64 + if i == j { 0.2 } else { 0.0 };
                }
            }
            GaussianComponent::new(mean, cov).unwrap()
        })
        .collect();
    MixtureModel::new(raw.iter().map(|w| w / total).collect(), comps).unwrap()
}

/// Four corner clusters on a square of side 4.4: two corners hold a single
/// round Gaussian, the other two hold a cross of two elongated Gaussians
/// (one heavy, one light). Counts are fixed: 120 per component except 60 for
/// the two light cross arms.
pub fn corner_crosses(seed: u64) -> DataMatrix {
    let l = 4.4;
    let long = 1.0;
    let thin = 0.085;
    let round = 0.3;
    let mut g = rng::stream(seed, "corner-crosses", 0);
    let mut v = Vec::new();
    push_gaussian(&mut v, &mut g, &[0.0, l], &diag(&[long, thin]), 120);
    push_gaussian(&mut v, &mut g, &[0.0, l], &diag(&[thin, long]), 120);
    push_gaussian(&mut v, &mut g, &[0.0, 0.0], &diag(&[round, round]), 120);
    push_gaussian(&mut v, &mut g, &[l, l], &diag(&[round, round]), 120);
    push_gaussian(&mut v, &mut g, &[l, 0.0], &diag(&[long, thin]), 60);
    push_gaussian(&mut v, &mut g, &[l, 0.0], &diag(&[thin, long]), 60);
    DataMatrix::new(600, 2, v).unwrap()
}

/// Three round clusters of 150 points at (0,0), (1.75,1.75) and (-4,4).
pub fn three_blobs(seed: u64) -> DataMatrix {
    let mut g = rng::stream(seed, "three-blobs", 0);
    let mut v = Vec::new();
    for c in [[0.0, 0.0], [1.75, 1.75], [-4.0, 4.0]] {
        push_gaussian(&mut v, &mut g, &c, &diag(&[1.0, 1.0]), 150);
    }
    DataMatrix::new(450, 2, v).unwrap()
}

/// One-dimensional sample: `n1` draws from N(0,1) followed by `n2` from N(shift,1).
pub fn two_normals(n1: usize, n2: usize, shift: f64, seed: u64, index: u64) -> DataMatrix {
    let mut g = rng::stream(seed, "two-normals", index);
    let v: Vec<f64> = (0..n1 + n2)
        .map(|i| normal(&mut g) + if i < n1 { 0.0 } else { shift })
        .collect();
    DataMatrix::new(n1 + n2, 1, v).unwrap()
}
