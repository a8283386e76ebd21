//! Gaussian models of hard partitions.

use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, GaussianComponent, MixtureModel, Partition};
use crate::error::{Error, Result};

/// How cluster covariances are estimated from a partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceModel {
    /// Each cluster gets its own MLE covariance.
    #[default]
    Full,
    /// Every cluster shares the pooled within-cluster MLE covariance.
    Pooled,
}

/// `1e-6` times the mean per-feature variance of `x`.
pub fn default_regularization(x: &DataMatrix) -> f64 {
    let v = x.column_variances();
    1e-6 * v.iter().sum::<f64>() / v.len() as f64
}

/// Fits one Gaussian per cluster: weight `n_k / n`, the cluster mean, and the
/// MLE covariance (divided by `n_k`) plus `reg * I`.
pub fn partition_to_gaussians(
    x: &DataMatrix,
    part: &Partition,
    reg: f64,
    cov_model: CovarianceModel,
) -> Result<MixtureModel> {
    let (n, p) = (x.rows(), x.cols());
    if part.len() != n {
        return Err(Error::invalid(format!(
            "partition has {} labels for {n} observations",
            part.len()
        )));
    }
    if !(reg >= 0.0) {
        return Err(Error::invalid("regularization must be non-negative"));
    }
    let k = part.k();
    let sizes = part.sizes();
    let mut means = vec![0.0; k * p];
    for (i, &l) in part.labels().iter().enumerate() {
        for (m, v) in means[l * p..(l + 1) * p].iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for l in 0..k {
        means[l * p..(l + 1) * p].iter_mut().for_each(|m| *m /= sizes[l] as f64);
    }
    let mut scatter = vec![0.0; k * p * p];
    for (i, &l) in part.labels().iter().enumerate() {
        let row = x.row(i);
        let mu = &means[l * p..(l + 1) * p];
        let s = &mut scatter[l * p * p..(l + 1) * p * p];
        for a in 0..p {
            for b in 0..p {
                s[a * p + b] += (row[a] - mu[a]) * (row[b] - mu[b]);
            }
        }
    }
    let pooled: Vec<f64> = match cov_model {
        CovarianceModel::Pooled => (0..p * p)
            .map(|e| (0..k).map(|l| scatter[l * p * p + e]).sum::<f64>() / n as f64)
            .collect(),
        CovarianceModel::Full => Vec::new(),
    };
    let comps = (0..k)
        .map(|l| {
            let mut cov: Vec<f64> = match cov_model {
                CovarianceModel::Full => scatter[l * p * p..(l + 1) * p * p]
                    .iter()
                    .map(|s| s / sizes[l] as f64)
                    .collect(),
                CovarianceModel::Pooled => pooled.clone(),
            };
            for a in 0..p {
                cov[a * p + a] += reg;
            }
            GaussianComponent::new(means[l * p..(l + 1) * p].to_vec(), cov)
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = sizes.iter().map(|&s| s as f64 / n as f64).collect();
    MixtureModel::new(weights, comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn data() -> DataMatrix {
        DataMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![10.0, 10.0],
        ])
        .unwrap()
    }

    #[test]
    fn one_cluster_is_grand_mean() {
        let x = data();
        let m = partition_to_gaussians(&x, &Partition::new(vec![0; 4]).unwrap(), 1e-6, CovarianceModel::Full).unwrap();
        assert_eq!(m.weights(), &[1.0]);
        assert_eq!(m.component(0).mean(), x.column_means().as_slice());
    }

    #[test]
    fn equal_sizes_give_equal_weights() {
        let x = DataMatrix::new(450, 1, (0..450).map(f64::from).collect()).unwrap();
        let labels: Vec<usize> = (0..450).map(|i| i / 150).collect();
        let m = partition_to_gaussians(&x, &Partition::new(labels).unwrap(), 1e-6, CovarianceModel::Full).unwrap();
        for w in m.weights() {
            assert_eq!(*w, 1.0 / 3.0);
        }
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_covariance_is_regularizer() {
        let x = data();
        let part = Partition::new(vec![0, 0, 0, 1]).unwrap();
        let m = partition_to_gaussians(&x, &part, 0.25, CovarianceModel::Full).unwrap();
        assert_eq!(m.component(1).covariance(), &[0.25, 0.0, 0.0, 0.25]);
        // cluster 0 scatter: points (0,0),(2,0),(0,2) around (2/3, 2/3)
        let c = m.component(0).covariance();
        assert_relative_eq!(c[0], 8.0 / 9.0 + 0.25, epsilon = 1e-12);
        assert_relative_eq!(c[1], -4.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn pooled_covariance_is_shared() {
        let x = data();
        let part = Partition::new(vec![0, 0, 0, 1]).unwrap();
        let m = partition_to_gaussians(&x, &part, 0.0, CovarianceModel::Pooled).unwrap();
        assert_eq!(m.component(0).covariance(), m.component(1).covariance());
        assert_relative_eq!(m.component(0).covariance()[0], (8.0 / 3.0) / 4.0, epsilon = 1e-12);
    }
}
