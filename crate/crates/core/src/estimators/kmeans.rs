//! Lloyd's k-means with k-means++ seeding and best-of-restarts selection.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Partition};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansFit {
    pub partition: Partition,
    /// `K x p`, row `k` is the mean of cluster `k`.
    pub centroids: Vec<Vec<f64>>,
    pub distortion: f64,
    pub restarts_used: usize,
}

/// One Lloyd run from fixed starting centers.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub labels: Vec<usize>,
    pub centroids: Vec<f64>,
    pub distortion: f64,
    /// Distortion after every centroid update.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center (lowest index on ties) and its squared distance.
pub fn nearest(x: &[f64], centers: &[f64], p: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.chunks(p).enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding: first center uniform, then proportional to the squared
/// distance to the nearest chosen center.
pub fn kmeanspp(x: &DataMatrix, k: usize, rng: &mut StreamRng) -> Vec<f64> {
    let (n, p) = (x.rows(), x.cols());
    let mut centers = Vec::with_capacity(k * p);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centers.extend_from_slice(x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    while centers.len() < k * p {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            // every point coincides with a center; take any unused row
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let c = x.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), &c));
        }
        centers.extend(c);
    }
    centers
}

fn assign(x: &DataMatrix, centers: &[f64], labels: &mut [usize]) {
    let p = x.cols();
    for (i, l) in labels.iter_mut().enumerate() {
        *l = nearest(x.row(i), centers, p).0;
    }
}

fn cluster_means(x: &DataMatrix, labels: &[usize], k: usize) -> (Vec<f64>, Vec<usize>) {
    let p = x.cols();
    let mut sums = vec![0.0; k * p];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums[l * p..(l + 1) * p].iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for (l, &c) in counts.iter().enumerate() {
        if c > 0 {
            sums[l * p..(l + 1) * p].iter_mut().for_each(|s| *s /= c as f64);
        }
    }
    (sums, counts)
}

/// Sum of squared distances of each point to its cluster center.
pub fn distortion(x: &DataMatrix, labels: &[usize], centers: &[f64]) -> f64 {
    let p = x.cols();
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(x.row(i), &centers[l * p..(l + 1) * p]))
        .sum()
}

/// Centroid update with empty-cluster repair: an empty cluster takes the
/// point farthest from its centroid (from a cluster with at least two points).
fn update_centroids(x: &DataMatrix, labels: &mut [usize], k: usize) -> Vec<f64> {
    let p = x.cols();
    loop {
        let (centers, counts) = cluster_means(x, labels, k);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return centers;
        };
        let far = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(x.row(a), &centers[labels[a] * p..(labels[a] + 1) * p]);
                let db = sq_dist(x.row(b), &centers[labels[b] * p..(labels[b] + 1) * p]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with two or more points");
        labels[far] = empty;
    }
}

/// Runs Lloyd iterations until the assignment is a fixed point or
/// `max_iter` updates have been made.
pub fn lloyd(x: &DataMatrix, init_centers: Vec<f64>, max_iter: usize) -> LloydRun {
    let k = init_centers.len() / x.cols();
    let mut labels = vec![0; x.rows()];
    assign(x, &init_centers, &mut labels);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut centers;
    loop {
        centers = update_centroids(x, &mut labels, k);
        history.push(distortion(x, &labels, &centers));
        iterations += 1;
        let mut next = labels.clone();
        assign(x, &centers, &mut next);
        if next == labels {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        labels = next;
    }
    LloydRun {
        distortion: *history.last().expect("at least one update"),
        labels,
        centroids: centers,
        history,
        iterations,
        converged,
    }
}

/// Best of `restarts` k-means++/Lloyd runs by distortion.
pub fn fit_kmeans(x: &DataMatrix, k: usize, restarts: usize, seed: u64) -> Result<KmeansFit> {
    if k == 0 || k > x.rows() {
        return Err(Error::invalid(format!(
            "k-means needs 1 <= K <= n, got K={k} with n={}",
            x.rows()
        )));
    }
    if restarts == 0 {
        return Err(Error::invalid("k-means needs at least one restart"));
    }
    let runs: Vec<LloydRun> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, "kmeans", r as u64);
            lloyd(x, kmeanspp(x, k, &mut rng), DEFAULT_MAX_ITER)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.distortion < a.distortion { b } else { a })
        .expect("restarts >= 1");
    let p = x.cols();
    Ok(KmeansFit {
        partition: Partition::new(best.labels)?,
        centroids: best.centroids.chunks(p).map(<[f64]>::to_vec).collect(),
        distortion: best.distortion,
        restarts_used: restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pairs() -> DataMatrix {
        DataMatrix::from_rows(&[vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 1.0], vec![10.0, 1.0]]).unwrap()
    }

    #[test]
    fn single_cluster_distortion_is_total_scatter() {
        let x = pairs();
        let fit = fit_kmeans(&x, 1, 3, 0).unwrap();
        let mean = x.column_means();
        let tss: f64 = x.iter_rows().map(|r| sq_dist(r, &mean)).sum();
        assert_relative_eq!(fit.distortion, tss, epsilon = 1e-12);
    }

    #[test]
    fn separated_pairs_found() {
        // Enumerating all 7 two-group partitions of the 4 points: the pairs
        // split by x-coordinate cost 0.5 + 0.5 = 1.0, every other split costs more.
        let x = pairs();
        let fit = fit_kmeans(&x, 2, 5, 3).unwrap();
        assert_relative_eq!(fit.distortion, 1.0, epsilon = 1e-12);
        let l = fit.partition.labels();
        assert_eq!(l[0], l[2]);
        assert_eq!(l[1], l[3]);
        assert_ne!(l[0], l[1]);
    }

    #[test]
    fn k_equals_n_has_zero_distortion() {
        let x = pairs();
        assert_eq!(fit_kmeans(&x, 4, 2, 1).unwrap().distortion, 0.0);
        assert!(fit_kmeans(&x, 5, 1, 1).is_err());
    }

    #[test]
    fn empty_cluster_is_repaired() {
        // Third center far from all data starts empty.
        let x = pairs();
        let run = lloyd(&x, vec![0.0, 0.5, 10.0, 0.5, 100.0, 100.0], 50);
        let mut counts = [0; 3];
        run.labels.iter().for_each(|&l| counts[l] += 1);
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn centroids_are_cluster_means() {
        let mut rng = rng::stream(9, "t", 0);
        let v: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let x = DataMatrix::new(100, 2, v).unwrap();
        let fit = fit_kmeans(&x, 4, 3, 11).unwrap();
        let (means, _) = cluster_means(&x, fit.partition.labels(), 4);
        for (k, c) in fit.centroids.iter().enumerate() {
            assert_relative_eq!(c[0], means[2 * k], epsilon = 1e-12);
            assert_relative_eq!(c[1], means[2 * k + 1], epsilon = 1e-12);
        }
    }
}
