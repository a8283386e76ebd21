//! Choosing the number of clusters: the gap statistic, `P_mc`-constrained
//! selection and the validity indices usually reported next to them.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClusterConfiguration, DataMatrix, Partition};
use crate::error::{Error, Result};
use crate::estimators::{cut_tree, default_regularization, fit_hclust, fit_kmeans, partition_to_gaussians, CovarianceModel};
use crate::io;
use crate::pmc::{self, PmcSettings};
use crate::rng;

pub const DEFAULT_REFERENCES: usize = 50;
pub const MIN_REFERENCES: usize = 10;
pub const KMEANS_RESTARTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clusterer {
    #[default]
    Kmeans,
    Hclust,
}

impl std::str::FromStr for Clusterer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Clusterer::Kmeans),
            "hclust" => Ok(Clusterer::Hclust),
            _ => Err(Error::invalid(format!("unknown clusterer `{s}` (expected kmeans or hclust)"))),
        }
    }
}

impl Clusterer {
    /// One partition per requested K. Ward clustering builds a single tree
    /// and cuts it; k-means runs separately for each K.
    pub fn fit_range(self, x: &DataMatrix, ks: &[usize], seed: u64) -> Result<Vec<Partition>> {
        match self {
            Clusterer::Kmeans => ks
                .iter()
                .map(|&k| {
                    fit_kmeans(x, k, KMEANS_RESTARTS, rng::child_seed(seed, "kmeans-k", k as u64))
                        .map(|f| f.partition)
                })
                .collect(),
            Clusterer::Hclust => {
                for &k in ks {
                    if k == 0 || k > x.rows() {
                        return Err(Error::invalid(format!(
                            "cannot cut {} observations into {k} groups",
                            x.rows()
                        )));
                    }
                }
                if x.rows() == 1 {
                    return Ok(ks.iter().map(|_| Partition::from_labels(&[0])).collect());
                }
                let tree = fit_hclust(x)?;
                ks.iter().map(|&k| cut_tree(&tree, k)).collect()
            }
        }
    }

    pub fn fit(self, x: &DataMatrix, k: usize, seed: u64) -> Result<Partition> {
        Ok(self.fit_range(x, &[k], seed)?.remove(0))
    }
}

/// Cluster means, one row per cluster.
pub fn centroids(x: &DataMatrix, part: &Partition) -> Vec<f64> {
    let p = x.cols();
    let sizes = part.sizes();
    let mut c = vec![0.0; part.k() * p];
    for (i, &l) in part.labels().iter().enumerate() {
        for (m, v) in c[l * p..(l + 1) * p].iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for (l, &s) in sizes.iter().enumerate() {
        c[l * p..(l + 1) * p].iter_mut().for_each(|m| *m /= s as f64);
    }
    c
}

/// Pooled within-cluster sum of squared distances to cluster means.
pub fn within_dispersion(x: &DataMatrix, part: &Partition) -> f64 {
    let p = x.cols();
    let c = centroids(x, part);
    part.labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            x.row(i)
                .iter()
                .zip(&c[l * p..(l + 1) * p])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub k: usize,
    pub gap: f64,
    /// Reference standard deviation times `sqrt(1 + 1/B)`.
    pub sd: f64,
    pub log_w: f64,
    pub reference_log_w: f64,
}

fn log_dispersion(w: f64) -> f64 {
    w.max(f64::MIN_POSITIVE).ln()
}

/// Gap statistic with references drawn uniformly over the bounding box of
/// the data.
pub fn gap_statistic(x: &DataMatrix, clusterer: Clusterer, ks: &[usize], b: usize, seed: u64) -> Result<Vec<GapEntry>> {
    if ks.is_empty() {
        return Err(Error::invalid("empty K range"));
    }
    if b < MIN_REFERENCES {
        return Err(Error::invalid(format!(
            "the gap statistic needs at least {MIN_REFERENCES} reference sets, got {b}"
        )));
    }
    let (n, p) = (x.rows(), x.cols());
    let lo: Vec<f64> = (0..p).map(|j| x.iter_rows().map(|r| r[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..p).map(|j| x.iter_rows().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max)).collect();

    let observed: Vec<f64> = clusterer
        .fit_range(x, ks, rng::child_seed(seed, "gap-observed", 0))?
        .iter()
        .map(|part| log_dispersion(within_dispersion(x, part)))
        .collect();

    let refs: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(seed, "gap-reference", r as u64);
            let values = (0..n * p)
                .map(|t| {
                    let j = t % p;
                    lo[j] + (hi[j] - lo[j]) * g.random::<f64>()
                })
                .collect();
            let xr = DataMatrix::new(n, p, values)?;
            let parts = clusterer.fit_range(&xr, ks, rng::child_seed(seed, "gap-reference-fit", r as u64))?;
            Ok(parts.iter().map(|part| log_dispersion(within_dispersion(&xr, part))).collect())
        })
        .collect::<Result<_>>()?;

    let bf = b as f64;
    Ok(ks
        .iter()
        .enumerate()
        .map(|(t, &k)| {
            let mean = refs.iter().map(|r| r[t]).sum::<f64>() / bf;
            let var = refs.iter().map(|r| (r[t] - mean).powi(2)).sum::<f64>() / bf;
            GapEntry {
                k,
                gap: mean - observed[t],
                sd: var.sqrt() * (1.0 + 1.0 / bf).sqrt(),
                log_w: observed[t],
                reference_log_w: mean,
            }
        })
        .collect())
}

/// Smallest K with `gap(K) >= gap(K+1) - sd(K+1)`; the largest K in range
/// when no such K exists.
pub fn one_se_choice(entries: &[GapEntry]) -> Option<usize> {
    for w in entries.windows(2) {
        if w[0].gap >= w[1].gap - w[1].sd {
            return Some(w[0].k);
        }
    }
    entries.last().map(|e| e.k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstrainedChoice {
    pub k: usize,
    /// No K met the `P_mc` ceiling; `k` then minimizes `P_mc`.
    pub infeasible: bool,
}

/// Minimizes `loss` over the K whose `P_mc` is at most `tau`; ties go to the
/// smaller K.
pub fn select_k_constrained(ks: &[usize], loss: &[f64], pmc: &[f64], tau: f64) -> Result<ConstrainedChoice> {
    if ks.is_empty() || ks.len() != loss.len() || ks.len() != pmc.len() {
        return Err(Error::invalid("K values, losses and P_mc values must be non-empty and aligned"));
    }
    let argmin = |vals: &[f64], keep: &dyn Fn(usize) -> bool| {
        (0..ks.len())
            .filter(|&t| keep(t))
            .min_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(ks[a].cmp(&ks[b])))
    };
    match argmin(loss, &|t| pmc[t] <= tau) {
        Some(t) => Ok(ConstrainedChoice {
            k: ks[t],
            infeasible: false,
        }),
        None => {
            let t = argmin(pmc, &|_| true).expect("non-empty");
            Ok(ConstrainedChoice {
                k: ks[t],
                infeasible: true,
            })
        }
    }
}

#[inline]
fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette width with Euclidean distances.
pub fn silhouette(x: &DataMatrix, part: &Partition) -> Result<f64> {
    let k = part.k();
    if k < 2 {
        return Err(Error::invalid("silhouette needs at least two clusters"));
    }
    if part.len() != x.rows() {
        return Err(Error::invalid("partition length does not match the data"));
    }
    let sizes = part.sizes();
    let labels = part.labels();
    let n = x.rows();
    let s: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += euclid(x.row(i), x.row(j));
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect();
    Ok(s.iter().sum::<f64>() / n as f64)
}

fn choose2(v: f64) -> f64 {
    v * (v - 1.0) / 2.0
}

/// Adjusted Rand index on raw label vectors. Two partitions that are both
/// trivial in the same way (all together, or all apart) score 1.
pub fn ari_labels(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "partitions have different lengths ({} and {})",
            a.len(),
            b.len()
        )));
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0usize; ka * kb];
    for (&i, &j) in a.iter().zip(b) {
        table[i * kb + j] += 1;
    }
    let mut rows = vec![0usize; ka];
    let mut cols = vec![0usize; kb];
    for i in 0..ka {
        for j in 0..kb {
            rows[i] += table[i * kb + j];
            cols[j] += table[i * kb + j];
        }
    }
    let index: f64 = table.iter().map(|&v| choose2(v as f64)).sum();
    let sa: f64 = rows.iter().map(|&v| choose2(v as f64)).sum();
    let sb: f64 = cols.iter().map(|&v| choose2(v as f64)).sum();
    let total = choose2(a.len() as f64);
    let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    ari_labels(a.labels(), b.labels())
}

/// Random halves of `0..n`.
fn split(n: usize, seed: u64, name: &str, rep: usize) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, name, rep as u64));
    let b = idx.split_off(n / 2);
    (idx, b)
}

fn nearest_centroid_labels(x: &DataMatrix, centers: &[f64]) -> Vec<usize> {
    x.iter_rows()
        .map(|r| crate::estimators::kmeans::nearest(r, centers, x.cols()).0)
        .collect()
}

fn check_split_args(x: &DataMatrix, k: usize, reps: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid("K must be at least 2"));
    }
    if reps < 2 {
        return Err(Error::invalid("at least two repetitions are needed"));
    }
    if x.rows() / 2 < k {
        return Err(Error::invalid(format!(
            "each half of {} observations must hold at least K={k} points",
            x.rows()
        )));
    }
    Ok(())
}

/// Split-half stability: each half is clustered directly and also labeled by
/// nearest centroid of the other half's clustering; the score is the mean ARI
/// between the two labelings, over both directions and all repetitions.
pub fn lange_stability(x: &DataMatrix, clusterer: Clusterer, k: usize, reps: usize, seed: u64) -> Result<f64> {
    check_split_args(x, k, reps)?;
    let scores: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let (ia, ib) = split(x.rows(), seed, "stability-split", r);
            let (xa, xb) = (x.select_rows(&ia), x.select_rows(&ib));
            let pa = clusterer.fit(&xa, k, rng::child_seed(seed, "stability-fit-a", r as u64))?;
            let pb = clusterer.fit(&xb, k, rng::child_seed(seed, "stability-fit-b", r as u64))?;
            let b_from_a = nearest_centroid_labels(&xb, &centroids(&xa, &pa));
            let a_from_b = nearest_centroid_labels(&xa, &centroids(&xb, &pb));
            Ok(0.5 * (ari_labels(&b_from_a, pb.labels())? + ari_labels(&a_from_b, pa.labels())?))
        })
        .collect::<Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / reps as f64)
}

/// Prediction strength: for a random train/test split, the smallest share,
/// over test clusters, of within-cluster point pairs that the training
/// centroids also place together. Singleton test clusters score 0.
pub fn prediction_strength(x: &DataMatrix, clusterer: Clusterer, k: usize, reps: usize, seed: u64) -> Result<f64> {
    check_split_args(x, k, reps)?;
    let scores: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let (itrain, itest) = split(x.rows(), seed, "strength-split", r);
            let (xtr, xte) = (x.select_rows(&itrain), x.select_rows(&itest));
            let ptr = clusterer.fit(&xtr, k, rng::child_seed(seed, "strength-fit-train", r as u64))?;
            let pte = clusterer.fit(&xte, k, rng::child_seed(seed, "strength-fit-test", r as u64))?;
            let pred = nearest_centroid_labels(&xte, &centroids(&xtr, &ptr));
            let mut worst = f64::INFINITY;
            for c in 0..pte.k() {
                let members: Vec<usize> = (0..xte.rows()).filter(|&i| pte.labels()[i] == c).collect();
                let m = members.len();
                let share = if m < 2 {
                    0.0
                } else {
                    let mut agree = 0usize;
                    for (t, &i) in members.iter().enumerate() {
                        for &j in &members[t + 1..] {
                            if pred[i] == pred[j] {
                                agree += 1;
                            }
                        }
                    }
                    agree as f64 / choose2(m as f64)
                };
                worst = worst.min(share);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / reps as f64)
}

/// One row of the per-K comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub gap: f64,
    pub sd: f64,
    pub pmc: f64,
    pub pmc_std_error: f64,
    pub silhouette: Option<f64>,
    pub stability: Option<f64>,
    pub prediction_strength: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub clusterer: Clusterer,
    pub tau: f64,
    pub rows: Vec<SelectionRow>,
    pub choice: ConstrainedChoice,
    /// Partition at the chosen K.
    pub labels: Vec<usize>,
}

impl SelectionTable {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.k.to_string(),
                    r.gap.to_string(),
                    r.sd.to_string(),
                    r.pmc.to_string(),
                    r.pmc_std_error.to_string(),
                    opt(r.silhouette),
                    opt(r.stability),
                    opt(r.prediction_strength),
                ]
            })
            .collect();
        io::table_csv(
            &["K", "gap", "sd", "pmc", "pmc_std_error", "silhouette", "stability", "prediction_strength"],
            &rows,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub clusterer: Clusterer,
    pub ks: Vec<usize>,
    pub tau: f64,
    pub references: usize,
    pub seed: u64,
    pub pmc: PmcSettings,
    pub covariance: CovarianceModel,
    /// Also compute silhouette, stability and prediction strength.
    pub indices: bool,
    pub split_reps: usize,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            clusterer: Clusterer::Kmeans,
            ks: (1..=7).collect(),
            tau: 0.05,
            references: DEFAULT_REFERENCES,
            seed: 0,
            pmc: PmcSettings::default(),
            covariance: CovarianceModel::Full,
            indices: false,
            split_reps: 20,
        }
    }
}

/// `P_mc` of the Gaussian mixture fitted to a hard partition, one cluster
/// per part.
pub fn partition_pmc(
    x: &DataMatrix,
    part: &Partition,
    covariance: CovarianceModel,
    settings: &PmcSettings,
) -> Result<crate::data::McEstimate> {
    let model = partition_to_gaussians(x, part, default_regularization(x), covariance)?;
    pmc::pmc_mc(&model, &ClusterConfiguration::singletons(part.k()), settings)
}

/// Gap statistic, `P_mc` and optional indices for every K, and the
/// constrained choice with loss `-gap`.
pub fn select_k(x: &DataMatrix, opts: &SelectionOptions) -> Result<SelectionTable> {
    let ks = &opts.ks;
    if ks.is_empty() {
        return Err(Error::invalid("empty K range"));
    }
    let gaps = gap_statistic(x, opts.clusterer, ks, opts.references, opts.seed)?;
    let parts = opts
        .clusterer
        .fit_range(x, ks, rng::child_seed(opts.seed, "gap-observed", 0))?;
    let mut rows = Vec::with_capacity(ks.len());
    for ((&k, g), part) in ks.iter().zip(&gaps).zip(&parts) {
        let settings = PmcSettings {
            seed: rng::child_seed(opts.pmc.seed, "select-pmc", k as u64),
            ..opts.pmc
        };
        let est = partition_pmc(x, part, opts.covariance, &settings)?;
        let (sil, stab, ps) = if opts.indices && k >= 2 {
            let s = rng::child_seed(opts.seed, "indices", k as u64);
            (
                Some(silhouette(x, part)?),
                Some(lange_stability(x, opts.clusterer, k, opts.split_reps, s)?),
                Some(prediction_strength(x, opts.clusterer, k, opts.split_reps, s)?),
            )
        } else {
            (None, None, None)
        };
        rows.push(SelectionRow {
            k,
            gap: g.gap,
            sd: g.sd,
            pmc: est.value,
            pmc_std_error: est.std_error,
            silhouette: sil,
            stability: stab,
            prediction_strength: ps,
        });
    }
    let loss: Vec<f64> = rows.iter().map(|r| -r.gap).collect();
    let pmcs: Vec<f64> = rows.iter().map(|r| r.pmc).collect();
    let choice = select_k_constrained(ks, &loss, &pmcs, opts.tau)?;
    let at = ks.iter().position(|&k| k == choice.k).expect("choice comes from ks");
    Ok(SelectionTable {
        clusterer: opts.clusterer,
        tau: opts.tau,
        rows,
        choice,
        labels: parts[at].labels().to_vec(),
    })
}
