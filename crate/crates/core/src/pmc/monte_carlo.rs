//! Stratified sampling from the mixture and chunked, parallel evaluation.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::posterior::Posterior;
use super::{DeltaMatrix, Rule};
use crate::data::{ClusterConfiguration, McEstimate, MixtureModel};
use crate::error::{Error, Result};
use crate::rng;

/// Points per work unit. Each chunk has its own random stream, so the sample
/// does not depend on the thread count.
pub const CHUNK_SIZE: usize = 4096;

/// Points drawn from the mixture, grouped by component in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct McSample {
    pub dim: usize,
    pub seed: u64,
    /// Row-major `m x dim`.
    pub points: Vec<f64>,
}

impl McSample {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

/// Per-component draw counts: `floor(m * a_k)` each, with the remainder
/// allocated by multinomial draws.
pub fn stratified_counts(weights: &[f64], m: usize, seed: u64) -> Vec<usize> {
    let mut counts: Vec<usize> = weights.iter().map(|a| (m as f64 * a).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut rest = m.saturating_sub(assigned);
    if assigned > m {
        // only possible through rounding in unnormalized input
        let mut over = assigned - m;
        for c in counts.iter_mut().rev() {
            let take = over.min(*c);
            *c -= take;
            over -= take;
        }
    }
    let total: f64 = weights.iter().sum();
    let mut rng = rng::stream(seed, "pmc-strata", 0);
    while rest > 0 {
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (k, a) in weights.iter().enumerate() {
            if u < *a {
                pick = k;
                break;
            }
            u -= a;
        }
        counts[pick] += 1;
        rest -= 1;
    }
    counts
}

pub fn draw_sample(model: &MixtureModel, m: usize, seed: u64) -> Result<McSample> {
    let p = model.dim();
    let counts = stratified_counts(model.weights(), m, seed);
    let mut ends = Vec::with_capacity(counts.len());
    let mut acc = 0;
    for c in &counts {
        acc += c;
        ends.push(acc);
    }
    for (i, comp) in model.components().iter().enumerate() {
        if comp.factor().is_none() {
            return Err(Error::invalid(format!("component {i} covariance is not positive definite")));
        }
    }
    let mut points = vec![0.0; m * p];
    points
        .par_chunks_mut(CHUNK_SIZE * p)
        .enumerate()
        .for_each(|(chunk, out)| {
            let mut rng = rng::stream(seed, "pmc-points", chunk as u64);
            let mut z = vec![0.0; p];
            for (r, row) in out.chunks_mut(p).enumerate() {
                let idx = chunk * CHUNK_SIZE + r;
                let comp = ends.partition_point(|&e| e <= idx);
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                model.component(comp).transform_standard(&z, row);
            }
        });
    Ok(McSample { dim: p, seed, points })
}

/// Running moments of the per-point summand plus pairwise posterior products.
#[derive(Debug, Clone)]
struct Accumulator {
    n: usize,
    mean: f64,
    m2: f64,
    pairs: Vec<f64>,
}

impl Accumulator {
    fn new(pairs: usize) -> Self {
        Self {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            pairs: vec![0.0; pairs],
        }
    }

    #[inline]
    fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    /// Chan et al. pairwise combination; applied in chunk order.
    fn merge(mut self, other: Accumulator) -> Self {
        if other.n == 0 {
            return self;
        }
        if self.n == 0 {
            return other;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
        for (a, b) in self.pairs.iter_mut().zip(other.pairs) {
            *a += b;
        }
        self
    }
}

fn accumulate(
    model: &MixtureModel,
    config: &ClusterConfiguration,
    sample: &McSample,
    rule: Rule,
    with_pairs: bool,
) -> Result<Accumulator> {
    if sample.dim != model.dim() {
        return Err(Error::invalid("sample dimension does not match the model"));
    }
    let post = Posterior::new(model, config)?;
    let k = config.k();
    let n_pairs = if with_pairs { k * (k - 1) / 2 } else { 0 };
    let p = sample.dim;
    let chunks: Vec<Accumulator> = sample
        .points
        .par_chunks(CHUNK_SIZE * p)
        .map(|chunk| {
            let mut ws = post.workspace();
            let mut pi = vec![0.0; k];
            let mut acc = Accumulator::new(n_pairs);
            for x in chunk.chunks(p) {
                post.eval(x, &mut ws, &mut pi);
                acc.push(rule.summand(&pi));
                if with_pairs {
                    let mut t = 0;
                    for i in 0..k {
                        for j in i + 1..k {
                            acc.pairs[t] += pi[i] * pi[j];
                            t += 1;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    Ok(chunks
        .into_iter()
        .fold(Accumulator::new(n_pairs), Accumulator::merge))
}

fn delta_values(acc: &Accumulator, k: usize) -> Vec<Vec<f64>> {
    let m = acc.n as f64;
    let mut values = vec![vec![0.0; k]; k];
    let mut t = 0;
    for i in 0..k {
        for j in i + 1..k {
            let d = 2.0 * acc.pairs[t] / m;
            values[i][j] = d;
            values[j][i] = d;
            t += 1;
        }
    }
    values
}

fn estimate(acc: &Accumulator, value: f64, seed: u64) -> McEstimate {
    let m = acc.n;
    let sd = if m > 1 { (acc.m2.max(0.0) / (m - 1) as f64).sqrt() } else { 0.0 };
    McEstimate {
        value,
        std_error: sd / (m as f64).sqrt(),
        m_samples: m,
        seed,
    }
}

/// `P_mc` on a given sample. Under the randomized rule the value is the
/// upper-triangle sum of the pairwise reductions from the same sample.
pub fn evaluate_on_sample(
    model: &MixtureModel,
    config: &ClusterConfiguration,
    sample: &McSample,
    rule: Rule,
) -> Result<McEstimate> {
    if sample.is_empty() {
        return Err(Error::invalid("empty Monte Carlo sample"));
    }
    let randomized = rule == Rule::Randomized;
    let acc = accumulate(model, config, sample, rule, randomized)?;
    let value = if randomized {
        super::upper_sum(&delta_values(&acc, config.k()))
    } else {
        acc.mean
    };
    Ok(estimate(&acc, value, sample.seed))
}

pub fn delta_on_sample(model: &MixtureModel, config: &ClusterConfiguration, sample: &McSample) -> Result<DeltaMatrix> {
    if sample.is_empty() {
        return Err(Error::invalid("empty Monte Carlo sample"));
    }
    let acc = accumulate(model, config, sample, Rule::Randomized, true)?;
    let values = delta_values(&acc, config.k());
    let value = super::upper_sum(&values);
    Ok(DeltaMatrix {
        values,
        m_samples: acc.n,
        seed: sample.seed,
        estimate: estimate(&acc, value, sample.seed),
    })
}
