//! Testing whether the first split of a Ward tree reflects real structure.
//!
//! The statistic is `P_mc` of the two-cluster Gaussian model fitted to the
//! Ward split. Well separated groups give small values, so the rejection
//! region is the left tail of the null distribution, which is obtained by
//! simulating from a single Gaussian.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClusterConfiguration, DataMatrix, GaussianComponent, Partition};
use crate::error::{Error, Result};
use crate::estimators::{cut_tree, default_regularization, fit_hclust, partition_to_gaussians, CovarianceModel};
use crate::pmc::{self, PmcSettings};
use crate::rng;

/// Monte Carlo sample size used inside the statistic.
pub const STATISTIC_M: usize = 20_000;
pub const MIN_NULL_REPS: usize = 100;
pub const QUANTILE_LEVELS: [f64; 6] = [0.01, 0.025, 0.05, 0.1, 0.25, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub value: f64,
    pub std_error: f64,
    /// Ward two-cluster labels.
    pub labels: Vec<usize>,
}

/// The test statistic with its Monte Carlo error and the split it scored.
///
/// Both clusters share the pooled within-cluster covariance. The Monte Carlo
/// seed is a hash of the data shape and the split, so the value is a
/// deterministic function of the data.
pub fn statistic_details(x: &DataMatrix) -> Result<Statistic> {
    let (n, p) = (x.rows(), x.cols());
    if n < 4 {
        return Err(Error::invalid(format!("the test needs at least 4 observations, got {n}")));
    }
    let reg = default_regularization(x);
    if !(reg > 0.0) {
        return Err(Error::Degenerate("all observations are identical".into()));
    }
    let part = cut_tree(&fit_hclust(x)?, 2)?;
    let mut key = Vec::with_capacity(16 + n);
    key.extend_from_slice(&(n as u64).to_le_bytes());
    key.extend_from_slice(&(p as u64).to_le_bytes());
    key.extend(part.labels().iter().map(|&l| l as u8));
    let settings = PmcSettings {
        m_samples: STATISTIC_M,
        seed: rng::seed_from_bytes(&key),
        ..PmcSettings::default()
    };
    let model = partition_to_gaussians(x, &part, reg, CovarianceModel::Pooled)?;
    let est = pmc::pmc_mc(&model, &ClusterConfiguration::singletons(2), &settings)?;
    Ok(Statistic {
        value: est.value,
        std_error: est.std_error,
        labels: part.labels().to_vec(),
    })
}

pub fn pmc_statistic(x: &DataMatrix) -> Result<f64> {
    statistic_details(x).map(|s| s.value)
}

fn gaussian_sample(mean: &[f64], comp: Option<&GaussianComponent>, n: usize, seed: u64, name: &str, rep: usize) -> Result<DataMatrix> {
    let p = mean.len();
    let mut g = rng::stream(seed, name, rep as u64);
    let mut values = vec![0.0; n * p];
    let mut z = vec![0.0; p];
    for row in values.chunks_mut(p) {
        for v in z.iter_mut() {
            *v = g.sample(StandardNormal);
        }
        match comp {
            Some(c) => c.transform_standard(&z, row),
            None => row.copy_from_slice(&z),
        }
    }
    DataMatrix::new(n, p, values)
}

fn simulate(n: usize, mean: &[f64], comp: Option<&GaussianComponent>, reps: usize, seed: u64, name: &str) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| pmc_statistic(&gaussian_sample(mean, comp, n, seed, name, r)?))
        .collect::<Result<_>>()?;
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Sorted statistics of `reps` samples of size `n` from `N(0, I_p)`.
pub fn null_distribution(n: usize, p: usize, reps: usize, seed: u64) -> Result<Vec<f64>> {
    if reps < MIN_NULL_REPS {
        return Err(Error::invalid(format!("at least {MIN_NULL_REPS} null replicates are needed, got {reps}")));
    }
    if p == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    simulate(n, &vec![0.0; p], None, reps, seed, "null-data")
}

/// Left-tail p-value `(1 + #{null <= stat}) / (1 + reps)`.
pub fn pvalue_mc(stat: f64, null: &[f64]) -> Result<f64> {
    if null.is_empty() {
        return Err(Error::invalid("empty null sample"));
    }
    let below = null.iter().filter(|&&v| v <= stat).count();
    Ok((1 + below) as f64 / (1 + null.len()) as f64)
}

/// Single Gaussian MLE fit of `x`.
pub fn fit_single_gaussian(x: &DataMatrix) -> Result<GaussianComponent> {
    let part = Partition::new(vec![0; x.rows()])?;
    let model = partition_to_gaussians(x, &part, 0.0, CovarianceModel::Full)?;
    let c = model.component(0);
    GaussianComponent::new(c.mean().to_vec(), c.covariance().to_vec())
        .map_err(|_| Error::Degenerate("sample covariance is singular".into()))
}

/// Sorted statistics of `b` samples simulated from the single-Gaussian MLE
/// fit of `x`.
pub fn bootstrap_distribution(x: &DataMatrix, b: usize, seed: u64) -> Result<Vec<f64>> {
    if b < MIN_NULL_REPS {
        return Err(Error::invalid(format!("at least {MIN_NULL_REPS} bootstrap replicates are needed, got {b}")));
    }
    let fit = fit_single_gaussian(x)?;
    simulate(x.rows(), fit.mean(), Some(&fit), b, seed, "bootstrap-data")
}

pub fn pvalue_bootstrap(x: &DataMatrix, b: usize, seed: u64) -> Result<f64> {
    pvalue_mc(pmc_statistic(x)?, &bootstrap_distribution(x, b, seed)?)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Mc,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub statistic_std_error: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub reps: usize,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub null_quantiles: Vec<QuantileRow>,
    pub labels: Vec<usize>,
}

/// Full test: statistic, reference distribution and left-tail p-value.
pub fn hclust_test(x: &DataMatrix, method: TestMethod, reps: usize, seed: u64) -> Result<TestReport> {
    let stat = statistic_details(x)?;
    let null = match method {
        TestMethod::Mc => null_distribution(x.rows(), x.cols(), reps, seed)?,
        TestMethod::Bootstrap => bootstrap_distribution(x, reps, seed)?,
    };
    Ok(TestReport {
        statistic: stat.value,
        statistic_std_error: stat.std_error,
        p_value: pvalue_mc(stat.value, &null)?,
        method,
        reps,
        seed,
        n: x.rows(),
        p: x.cols(),
        null_quantiles: QUANTILE_LEVELS
            .iter()
            .map(|&level| QuantileRow {
                level,
                value: quantile(&null, level),
            })
            .collect(),
        labels: stat.labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn normal_data(n: usize, seed: u64, shift: impl Fn(usize) -> f64) -> DataMatrix {
        let mut g = rng::stream(seed, "hyptest-test", 0);
        let v = (0..n).map(|i| shift(i) + g.sample::<f64, _>(StandardNormal)).collect();
        DataMatrix::new(n, 1, v).unwrap()
    }

    #[test]
    fn separated_clusters_give_small_statistic() {
        let x = normal_data(60, 1, |i| if i < 30 { 0.0 } else { 20.0 });
        assert!(pmc_statistic(&x).unwrap() < 0.01);
    }

    #[test]
    fn statistic_is_bounded_and_deterministic() {
        let x = normal_data(80, 2, |_| 0.0);
        let s = pmc_statistic(&x).unwrap();
        assert!((0.0..=0.5).contains(&s));
        assert_eq!(s, pmc_statistic(&x).unwrap());
    }

    #[test]
    fn degenerate_inputs() {
        let same = DataMatrix::new(5, 1, vec![1.0; 5]).unwrap();
        assert_eq!(pmc_statistic(&same).unwrap_err().kind(), "numerical");
        let tiny = DataMatrix::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(pmc_statistic(&tiny).is_err());
    }

    #[test]
    fn pvalue_rules() {
        let null: Vec<f64> = (1..=99).map(|i| i as f64 / 100.0).collect();
        assert_relative_eq!(pvalue_mc(0.0, &null).unwrap(), 0.01);
        assert_relative_eq!(pvalue_mc(1.0, &null).unwrap(), 1.0);
        assert_relative_eq!(pvalue_mc(0.05, &null).unwrap(), 0.06);
        assert!(pvalue_mc(0.1, &[]).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert_relative_eq!(quantile(&s, 0.1), 1.4);
    }

    #[test]
    fn null_sample_shape() {
        let null = null_distribution(40, 1, 100, 5).unwrap();
        assert_eq!(null.len(), 100);
        assert!(null.windows(2).all(|w| w[0] <= w[1]));
        assert!(null.iter().all(|v| (0.0..=0.5).contains(v)));
        assert!(null_distribution(40, 1, 99, 5).is_err());
    }

    #[test]
    fn report_fields() {
        let x = normal_data(50, 3, |i| if i % 2 == 0 { 0.0 } else { 6.0 });
        let r = hclust_test(&x, TestMethod::Mc, 100, 4).unwrap();
        assert_eq!(r.p_value, 1.0 / 101.0);
        assert_eq!(r.null_quantiles.len(), QUANTILE_LEVELS.len());
        let b = hclust_test(&x, TestMethod::Bootstrap, 100, 4).unwrap();
        assert_eq!(b.statistic, r.statistic);
        assert!(b.p_value < 0.05);
    }
}
