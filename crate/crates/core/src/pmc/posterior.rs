//! Cluster posterior probabilities `pi_k(x)` for a grouped mixture.

use crate::data::{ClusterConfiguration, MixtureModel};
use crate::error::{Error, Result};
use crate::linalg::GaussianFactor;

/// Precomputed evaluator of cluster posteriors.
///
/// Component terms are summed in ascending order of magnitude, so the result
/// does not depend on how components are indexed.
pub struct Posterior<'a> {
    model: &'a MixtureModel,
    assignment: &'a [usize],
    k: usize,
    log_w: Vec<f64>,
    factors: Vec<&'a GaussianFactor>,
}

/// Scratch space for [`Posterior::eval`]; one per thread.
pub struct Workspace {
    diff: Vec<f64>,
    scratch: Vec<f64>,
    terms: Vec<(f64, usize)>,
}

impl<'a> Posterior<'a> {
    pub fn new(model: &'a MixtureModel, config: &'a ClusterConfiguration) -> Result<Self> {
        config.check_against(model)?;
        let factors = model
            .components()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                c.factor()
                    .ok_or_else(|| Error::invalid(format!("component {i} covariance is not positive definite")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            assignment: config.assignment(),
            k: config.k(),
            log_w: model.weights().iter().map(|w| w.ln()).collect(),
            factors,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn workspace(&self) -> Workspace {
        let p = self.model.dim();
        Workspace {
            diff: vec![0.0; p],
            scratch: vec![0.0; p],
            terms: Vec::with_capacity(self.model.kappa()),
        }
    }

    /// Writes `pi(x)` into `pi` (length K) and returns `ln P(x)`.
    pub fn eval(&self, x: &[f64], ws: &mut Workspace, pi: &mut [f64]) -> f64 {
        ws.terms.clear();
        let mut max = f64::NEG_INFINITY;
        for (c, f) in self.factors.iter().enumerate() {
            let mean = self.model.component(c).mean();
            let l = self.log_w[c] + f.log_density(mean, x, &mut ws.diff, &mut ws.scratch);
            max = max.max(l);
            ws.terms.push((l, self.assignment[c]));
        }
        if max == f64::NEG_INFINITY {
            // far outside every component: fall back to the prior
            pi.iter_mut().for_each(|v| *v = 0.0);
            for (c, &a) in self.assignment.iter().enumerate() {
                pi[a] += self.model.weights()[c];
            }
            return max;
        }
        for t in ws.terms.iter_mut() {
            t.0 = (t.0 - max).exp();
        }
        ws.terms.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        pi.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for &(w, a) in &ws.terms {
            pi[a] += w;
            total += w;
        }
        pi.iter_mut().for_each(|v| *v /= total);
        max + total.ln()
    }
}

/// `pi(x)` for a single point.
pub fn cluster_posteriors(model: &MixtureModel, config: &ClusterConfiguration, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.dim() {
        return Err(Error::invalid(format!(
            "point has dimension {}, model has {}",
            x.len(),
            model.dim()
        )));
    }
    let post = Posterior::new(model, config)?;
    let mut ws = post.workspace();
    let mut pi = vec![0.0; config.k()];
    post.eval(x, &mut ws, &mut pi);
    Ok(pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GaussianComponent;
    use approx::assert_relative_eq;

    fn two_unit(d: f64) -> MixtureModel {
        MixtureModel::new(
            vec![0.5, 0.5],
            vec![
                GaussianComponent::new(vec![0.0], vec![1.0]).unwrap(),
                GaussianComponent::new(vec![d], vec![1.0]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identical_components_return_prior() {
        let c = || GaussianComponent::new(vec![1.0, -1.0], vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        let m = MixtureModel::new(vec![0.2, 0.3, 0.5], vec![c(), c(), c()]).unwrap();
        let cfg = ClusterConfiguration::singletons(3);
        for x in [[0.0, 0.0], [5.0, -3.0], [-2.0, 7.0]] {
            let pi = cluster_posteriors(&m, &cfg, &x).unwrap();
            for (a, b) in pi.iter().zip([0.2, 0.3, 0.5]) {
                assert_relative_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn midpoint_is_even() {
        let pi = cluster_posteriors(&two_unit(3.0), &ClusterConfiguration::singletons(2), &[1.5]).unwrap();
        assert_relative_eq!(pi[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn log_odds_at_component_mean() {
        // log-odds at x = 0 is (d^2 / 2) / 1 = 4.5 for d = 3
        let pi = cluster_posteriors(&two_unit(3.0), &ClusterConfiguration::singletons(2), &[0.0]).unwrap();
        assert_relative_eq!(pi[0], 1.0 / (1.0 + (-4.5f64).exp()), epsilon = 1e-14);
        assert_relative_eq!(pi[0], 0.98901, epsilon = 1e-5);
        assert_relative_eq!(pi[0] + pi[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn merged_cluster_posterior_is_sum() {
        let m = MixtureModel::new(
            vec![0.2, 0.3, 0.5],
            vec![
                GaussianComponent::new(vec![0.0], vec![1.0]).unwrap(),
                GaussianComponent::new(vec![1.0], vec![0.5]).unwrap(),
                GaussianComponent::new(vec![3.0], vec![2.0]).unwrap(),
            ],
        )
        .unwrap();
        let single = cluster_posteriors(&m, &ClusterConfiguration::singletons(3), &[0.7]).unwrap();
        let merged = cluster_posteriors(&m, &ClusterConfiguration::new(vec![0, 1, 0]).unwrap(), &[0.7]).unwrap();
        assert_relative_eq!(merged[0], single[0] + single[2], epsilon = 1e-14);
        assert_relative_eq!(merged[1], single[1], epsilon = 1e-14);
    }

    #[test]
    fn far_points_stay_normalized() {
        let pi = cluster_posteriors(&two_unit(3.0), &ClusterConfiguration::singletons(2), &[1e6]).unwrap();
        assert!(pi.iter().all(|v| v.is_finite()));
        assert_relative_eq!(pi.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}
