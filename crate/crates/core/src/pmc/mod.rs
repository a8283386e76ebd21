//! The misclassification probability `P_mc` of a clustered mixture.
//!
//! For a point `x` with cluster posteriors `pi(x)`, the randomized rule
//! (assign to cluster `k` with probability `pi_k(x)`) errs with probability
//! `sum_k pi_k (1 - pi_k)`; the optimal rule (assign to the most probable
//! cluster) errs with probability `1 - max_k pi_k`. `P_mc` is the expectation
//! of that error over `x ~ P`.
//!
//! Under the randomized rule `P_mc = sum_{i<j} Delta_ij` with
//! `Delta_ij = 2 E[pi_i pi_j]`, and merging clusters `i` and `j` lowers
//! `P_mc` by exactly `Delta_ij`. [`delta_matrix`] estimates every `Delta_ij`
//! from one shared sample so that identity also holds for the estimates.

mod monte_carlo;
mod posterior;
mod quadrature;

use serde::{Deserialize, Serialize};

use crate::data::{ClusterConfiguration, McEstimate, MixtureModel};
use crate::error::{Error, Result};

pub use monte_carlo::{
    delta_on_sample, draw_sample, evaluate_on_sample, stratified_counts, McSample, CHUNK_SIZE,
};
pub use posterior::{cluster_posteriors, Posterior, Workspace};
pub use quadrature::{integrate_adaptive, pmc_quadrature};

pub const DEFAULT_M: usize = 100_000;
pub const MIN_M: usize = 1000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    #[default]
    Randomized,
    Optimal,
}

impl Rule {
    /// Per-point error probability given the cluster posteriors.
    #[inline]
    pub fn summand(self, pi: &[f64]) -> f64 {
        match self {
            Rule::Randomized => pi.iter().map(|p| p * (1.0 - p)).sum(),
            Rule::Optimal => 1.0 - pi.iter().copied().fold(0.0, f64::max),
        }
    }
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "randomized" => Ok(Rule::Randomized),
            "optimal" => Ok(Rule::Optimal),
            _ => Err(Error::invalid(format!("unknown rule `{s}` (expected randomized or optimal)"))),
        }
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Rule::Randomized => "randomized",
            Rule::Optimal => "optimal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmcSettings {
    pub m_samples: usize,
    pub seed: u64,
    pub rule: Rule,
    /// Also integrate numerically (one or two dimensions only).
    pub quadrature: bool,
}

impl Default for PmcSettings {
    fn default() -> Self {
        Self {
            m_samples: DEFAULT_M,
            seed: 0,
            rule: Rule::Randomized,
            quadrature: false,
        }
    }
}

impl PmcSettings {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_samples < MIN_M {
            return Err(Error::invalid(format!(
                "m_samples must be at least {MIN_M}, got {}",
                self.m_samples
            )));
        }
        Ok(())
    }
}

/// Monte Carlo estimate of `P_mc`.
pub fn pmc_mc(model: &MixtureModel, config: &ClusterConfiguration, settings: &PmcSettings) -> Result<McEstimate> {
    settings.validate()?;
    config.check_against(model)?;
    if config.k() == 1 {
        return Ok(McEstimate {
            value: 0.0,
            std_error: 0.0,
            m_samples: settings.m_samples,
            seed: settings.seed,
        });
    }
    let sample = draw_sample(model, settings.m_samples, settings.seed)?;
    evaluate_on_sample(model, config, &sample, settings.rule)
}

/// Pairwise reductions `Delta_ij`, all from one shared sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMatrix {
    /// `K x K`, symmetric, zero diagonal.
    pub values: Vec<Vec<f64>>,
    pub m_samples: usize,
    pub seed: u64,
    /// Randomized-rule `P_mc` on the same sample; its value is
    /// [`DeltaMatrix::upper_sum`].
    pub estimate: McEstimate,
}

impl DeltaMatrix {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Sum over `i < j`, row by row.
    pub fn upper_sum(&self) -> f64 {
        upper_sum(&self.values)
    }

    /// Pair with the largest entry; ties go to the lexicographically
    /// smallest `(i, j)`.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.k() {
            for j in i + 1..self.k() {
                let v = self.values[i][j];
                if best.is_none_or(|b| v > b.2) {
                    best = Some((i, j, v));
                }
            }
        }
        best
    }

    /// Long-format heatmap data: one `i,j,delta` row per ordered pair.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,delta\n");
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                s.push_str(&format!("{i},{j},{v}\n"));
            }
        }
        s
    }
}

pub(crate) fn upper_sum(values: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (i, row) in values.iter().enumerate() {
        for v in &row[i + 1..] {
            s += v;
        }
    }
    s
}

pub fn delta_matrix(model: &MixtureModel, config: &ClusterConfiguration, settings: &PmcSettings) -> Result<DeltaMatrix> {
    settings.validate()?;
    if settings.rule != Rule::Randomized {
        return Err(Error::Unsupported(
            "pairwise reductions are defined for the randomized rule only".into(),
        ));
    }
    config.check_against(model)?;
    if config.k() == 1 {
        return Ok(DeltaMatrix {
            values: vec![vec![0.0]],
            m_samples: settings.m_samples,
            seed: settings.seed,
            estimate: McEstimate {
                value: 0.0,
                std_error: 0.0,
                m_samples: settings.m_samples,
                seed: settings.seed,
            },
        });
    }
    let sample = draw_sample(model, settings.m_samples, settings.seed)?;
    delta_on_sample(model, config, &sample)
}

/// `P_mc` when every cluster overlaps completely: `sum a_k (1 - a_k)` for
/// the randomized rule, `1 - max a_k` for the optimal rule.
pub fn pmc_upper_bound(weights: &[f64], rule: Rule) -> f64 {
    match rule {
        Rule::Randomized => weights.iter().map(|a| a * (1.0 - a)).sum(),
        Rule::Optimal => 1.0 - weights.iter().copied().fold(0.0, f64::max),
    }
}

/// Monte Carlo estimate plus the optional quadrature cross-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmcReport {
    pub rule: Rule,
    pub estimate: McEstimate,
    pub quadrature: Option<f64>,
    pub upper_bound: f64,
}

pub fn pmc_report(model: &MixtureModel, config: &ClusterConfiguration, settings: &PmcSettings) -> Result<PmcReport> {
    let estimate = pmc_mc(model, config, settings)?;
    let quadrature = if settings.quadrature {
        Some(pmc_quadrature(model, config, settings.rule)?)
    } else {
        None
    };
    Ok(PmcReport {
        rule: settings.rule,
        estimate,
        quadrature,
        upper_bound: pmc_upper_bound(&config.cluster_weights(model.weights()), settings.rule),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GaussianComponent;
    use approx::assert_relative_eq;

    fn unit(mean: f64) -> GaussianComponent {
        GaussianComponent::new(vec![mean], vec![1.0]).unwrap()
    }

    #[test]
    fn bounds() {
        assert_relative_eq!(pmc_upper_bound(&[0.5, 0.5], Rule::Randomized), 0.5);
        assert_relative_eq!(pmc_upper_bound(&[0.9, 0.1], Rule::Optimal), 0.1, epsilon = 1e-15);
        let third = [1.0 / 3.0; 3];
        assert_relative_eq!(pmc_upper_bound(&third, Rule::Randomized), 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(pmc_upper_bound(&third, Rule::Optimal), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn single_cluster_is_zero() {
        let m = MixtureModel::new(vec![0.5, 0.5], vec![unit(0.0), unit(1.0)]).unwrap();
        let est = pmc_mc(&m, &ClusterConfiguration::single(2), &PmcSettings::default()).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn settings_reject_small_m() {
        let m = MixtureModel::new(vec![1.0], vec![unit(0.0)]).unwrap();
        let s = PmcSettings {
            m_samples: 999,
            ..PmcSettings::default()
        };
        assert!(pmc_mc(&m, &ClusterConfiguration::single(1), &s).is_err());
    }

    #[test]
    fn delta_rejects_optimal_rule() {
        let m = MixtureModel::new(vec![0.5, 0.5], vec![unit(0.0), unit(1.0)]).unwrap();
        let s = PmcSettings {
            rule: Rule::Optimal,
            ..PmcSettings::default()
        };
        let err = delta_matrix(&m, &ClusterConfiguration::singletons(2), &s).unwrap_err();
        assert_eq!(err.kind(), "unsupported");
    }

    #[test]
    fn rule_round_trips_through_text() {
        for r in [Rule::Randomized, Rule::Optimal] {
            assert_eq!(r.to_string().parse::<Rule>().unwrap(), r);
        }
        assert!("bayes".parse::<Rule>().is_err());
    }

    #[test]
    fn summands_agree_for_two_clusters() {
        // with K = 2 the randomized error 2 p (1 - p) exceeds min(p, 1 - p)
        let pi = [0.3, 0.7];
        assert_relative_eq!(Rule::Randomized.summand(&pi), 0.42, epsilon = 1e-15);
        assert_relative_eq!(Rule::Optimal.summand(&pi), 0.3, epsilon = 1e-15);
    }
}
