//! Full-covariance Gaussian mixtures fitted by EM, with BIC selection of the
//! number of components.
//!
//! BIC follows the "larger is better" convention `2 loglik - d ln n`, where
//! `d = (kappa - 1) + kappa p + kappa p (p + 1) / 2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{log_sum_exp, DataMatrix, GaussianComponent, MixtureModel};
use crate::error::{Error, Result};
use crate::estimators::kmeans;
use crate::linalg::{self, GaussianFactor};
use crate::rng;

/// Initializations whose smallest weight falls below this are discarded.
pub const MIN_WEIGHT: f64 = 1e-8;
/// Initializations with a covariance condition number above this are discarded.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    /// Stop once the log-likelihood gain is below `tol * |loglik|`.
    pub tol: f64,
    pub max_iter: usize,
    pub n_init: usize,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            n_init: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub model: MixtureModel,
    pub loglik: f64,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood at every E-step of the winning initialization.
    pub loglik_trace: Vec<f64>,
}

pub fn free_parameters(kappa: usize, p: usize) -> usize {
    (kappa - 1) + kappa * p + kappa * p * (p + 1) / 2
}

pub fn bic(loglik: f64, kappa: usize, p: usize, n: usize) -> f64 {
    2.0 * loglik - free_parameters(kappa, p) as f64 * (n as f64).ln()
}

struct Params {
    weights: Vec<f64>,
    means: Vec<f64>,
    covs: Vec<f64>,
}

/// Weighted M-step from responsibilities (`n x kappa`, row-major).
fn m_step(x: &DataMatrix, resp: &[f64], kappa: usize) -> Option<Params> {
    let (n, p) = (x.rows(), x.cols());
    let mut nk = vec![0.0; kappa];
    let mut means = vec![0.0; kappa * p];
    for i in 0..n {
        let row = x.row(i);
        for k in 0..kappa {
            let r = resp[i * kappa + k];
            nk[k] += r;
            for j in 0..p {
                means[k * p + j] += r * row[j];
            }
        }
    }
    for k in 0..kappa {
        if nk[k] / n as f64 <= MIN_WEIGHT {
            return None;
        }
        means[k * p..(k + 1) * p].iter_mut().for_each(|m| *m /= nk[k]);
    }
    let mut covs = vec![0.0; kappa * p * p];
    let mut d = vec![0.0; p];
    for i in 0..n {
        let row = x.row(i);
        for k in 0..kappa {
            let r = resp[i * kappa + k];
            if r == 0.0 {
                continue;
            }
            for j in 0..p {
                d[j] = row[j] - means[k * p + j];
            }
            let c = &mut covs[k * p * p..(k + 1) * p * p];
            for a in 0..p {
                for b in 0..=a {
                    c[a * p + b] += r * d[a] * d[b];
                }
            }
        }
    }
    for k in 0..kappa {
        let c = &mut covs[k * p * p..(k + 1) * p * p];
        for a in 0..p {
            for b in 0..=a {
                let v = c[a * p + b] / nk[k];
                c[a * p + b] = v;
                c[b * p + a] = v;
            }
        }
        if linalg::condition_number(c, p) > MAX_CONDITION {
            return None;
        }
    }
    let weights = nk.iter().map(|v| v / n as f64).collect();
    Some(Params { weights, means, covs })
}

/// E-step: fills responsibilities and returns the log-likelihood.
fn e_step(x: &DataMatrix, params: &Params, resp: &mut [f64]) -> Option<f64> {
    let (n, p) = (x.rows(), x.cols());
    let kappa = params.weights.len();
    let factors: Vec<GaussianFactor> = (0..kappa)
        .map(|k| GaussianFactor::new(&params.covs[k * p * p..(k + 1) * p * p], p))
        .collect::<Option<_>>()?;
    let log_w: Vec<f64> = params.weights.iter().map(|w| w.ln()).collect();
    let mut diff = vec![0.0; p];
    let mut scratch = vec![0.0; p];
    let mut ll = 0.0;
    for i in 0..n {
        let row = x.row(i);
        let r = &mut resp[i * kappa..(i + 1) * kappa];
        for k in 0..kappa {
            r[k] = log_w[k]
                + factors[k].log_density(&params.means[k * p..(k + 1) * p], row, &mut diff, &mut scratch);
        }
        let lse = log_sum_exp(r);
        r.iter_mut().for_each(|v| *v = (*v - lse).exp());
        ll += lse;
    }
    ll.is_finite().then_some(ll)
}

fn to_model(params: Params, p: usize) -> Result<MixtureModel> {
    let kappa = params.weights.len();
    let comps = (0..kappa)
        .map(|k| {
            GaussianComponent::new(
                params.means[k * p..(k + 1) * p].to_vec(),
                params.covs[k * p * p..(k + 1) * p * p].to_vec(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    MixtureModel::new(params.weights, comps)
}

struct Run {
    params: Params,
    loglik: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn em_once(x: &DataMatrix, kappa: usize, opts: &EmOptions, init: usize) -> Option<Run> {
    let (n, p) = (x.rows(), x.cols());
    let mut rng = rng::stream(opts.seed, &format!("gmm-init-{kappa}"), init as u64);
    let centers = kmeans::kmeanspp(x, kappa, &mut rng);
    let mut resp = vec![0.0; n * kappa];
    for i in 0..n {
        let (k, _) = kmeans::nearest(x.row(i), &centers, p);
        resp[i * kappa + k] = 1.0;
    }
    let mut params = m_step(x, &resp, kappa)?;
    let mut trace = Vec::new();
    let mut converged = false;
    loop {
        let ll = e_step(x, &params, &mut resp)?;
        let prev = trace.last().copied();
        trace.push(ll);
        if let Some(prev) = prev {
            if ll - prev < opts.tol * ll.abs() {
                converged = true;
                break;
            }
        }
        if trace.len() >= opts.max_iter {
            break;
        }
        params = m_step(x, &resp, kappa)?;
    }
    Some(Run {
        loglik: *trace.last().expect("one E-step"),
        iterations: trace.len(),
        params,
        trace,
        converged,
    })
}

/// Best of `opts.n_init` EM runs by final log-likelihood.
pub fn fit_gmm_em(x: &DataMatrix, kappa: usize, opts: &EmOptions) -> Result<EmFit> {
    let (n, p) = (x.rows(), x.cols());
    if kappa == 0 {
        return Err(Error::invalid("kappa must be at least 1"));
    }
    if n <= kappa {
        return Err(Error::invalid(format!("EM needs n > kappa (n={n}, kappa={kappa})")));
    }
    if opts.n_init == 0 || opts.max_iter == 0 {
        return Err(Error::invalid("n_init and max_iter must be positive"));
    }
    let runs: Vec<Option<Run>> = (0..opts.n_init)
        .into_par_iter()
        .map(|r| em_once(x, kappa, opts, r))
        .collect();
    let discarded = runs.iter().filter(|r| r.is_none()).count();
    if discarded > 0 {
        log::debug!("kappa={kappa}: {discarded} of {} initializations collapsed", opts.n_init);
    }
    let best = runs
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.loglik > a.loglik { b } else { a })
        .ok_or_else(|| Error::Degenerate(format!("every initialization collapsed for kappa={kappa}")))?;
    let model = to_model(best.params, p)?;
    Ok(EmFit {
        model,
        loglik: best.loglik,
        bic: bic(best.loglik, kappa, p, n),
        iterations: best.iterations,
        converged: best.converged,
        loglik_trace: best.trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicEntry {
    pub kappa: usize,
    /// `None` when every initialization was degenerate.
    pub bic: Option<f64>,
    pub loglik: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicSelection {
    pub fit: EmFit,
    pub table: Vec<BicEntry>,
}

/// Fits every `kappa` in the range and keeps the largest BIC (smaller kappa
/// on ties). Degenerate kappas are skipped with a warning.
pub fn select_gmm_bic(x: &DataMatrix, kappa_range: &[usize], opts: &EmOptions) -> Result<BicSelection> {
    if kappa_range.is_empty() {
        return Err(Error::invalid("empty kappa range"));
    }
    let mut kappas = kappa_range.to_vec();
    kappas.sort_unstable();
    kappas.dedup();
    let mut table = Vec::new();
    let mut best: Option<EmFit> = None;
    for &kappa in &kappas {
        match fit_gmm_em(x, kappa, opts) {
            Ok(fit) => {
                table.push(BicEntry {
                    kappa,
                    bic: Some(fit.bic),
                    loglik: Some(fit.loglik),
                });
                if best.as_ref().is_none_or(|b| fit.bic > b.bic) {
                    best = Some(fit);
                }
            }
            Err(Error::Degenerate(msg)) => {
                log::warn!("skipping kappa={kappa}: {msg}");
                table.push(BicEntry {
                    kappa,
                    bic: None,
                    loglik: None,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let fit = best.ok_or_else(|| Error::Degenerate("no kappa in range produced a fit".into()))?;
    Ok(BicSelection { fit, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_blobs(centers: &[(f64, f64)], per: usize, sd: f64, seed: u64) -> DataMatrix {
        let mut rng = rng::stream(seed, "blobs", 0);
        let mut v = Vec::new();
        for &(a, b) in centers {
            for _ in 0..per {
                v.push(a + sd * rng.sample::<f64, _>(StandardNormal));
                v.push(b + sd * rng.sample::<f64, _>(StandardNormal));
            }
        }
        DataMatrix::new(centers.len() * per, 2, v).unwrap()
    }

    #[test]
    fn parameter_count() {
        assert_eq!(free_parameters(1, 1), 2);
        assert_eq!(free_parameters(3, 2), 2 + 6 + 9);
        assert_eq!(free_parameters(6, 2), 5 + 12 + 18);
        assert_eq!(free_parameters(2, 5), 1 + 10 + 30);
    }

    #[test]
    fn single_component_is_closed_form() {
        let x = gaussian_blobs(&[(1.0, -2.0)], 80, 1.5, 1);
        let fit = fit_gmm_em(&x, 1, &EmOptions::default()).unwrap();
        let mean = x.column_means();
        let c = fit.model.component(0);
        assert_relative_eq!(c.mean()[0], mean[0], epsilon = 1e-12);
        assert_relative_eq!(c.mean()[1], mean[1], epsilon = 1e-12);
        let mut cov = [0.0; 4];
        for r in x.iter_rows() {
            for a in 0..2 {
                for b in 0..2 {
                    cov[a * 2 + b] += (r[a] - mean[a]) * (r[b] - mean[b]) / 80.0;
                }
            }
        }
        for (a, b) in c.covariance().iter().zip(cov) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        // closed form: -n/2 (p ln 2pi + ln det S + p)
        let det = cov[0] * cov[3] - cov[1] * cov[2];
        let ll = -40.0 * (2.0 * (2.0 * std::f64::consts::PI).ln() + det.ln() + 2.0);
        assert_relative_eq!(fit.loglik, ll, epsilon = 1e-8);
        assert_relative_eq!(fit.bic, 2.0 * ll - 5.0 * 80f64.ln(), epsilon = 1e-8);
    }

    #[test]
    fn recovers_separated_means() {
        let x = gaussian_blobs(&[(0.0, 0.0), (8.0, 8.0)], 100, 1.0, 2);
        let fit = fit_gmm_em(&x, 2, &EmOptions::default()).unwrap();
        let mut means: Vec<&[f64]> = fit.model.components().iter().map(|c| c.mean()).collect();
        means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        // standard error of a 100-point mean with unit variance is 0.1
        for (m, t) in means.iter().zip([0.0, 8.0]) {
            assert!((m[0] - t).abs() < 0.3 && (m[1] - t).abs() < 0.3, "{m:?}");
        }
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
        assert!(crate::data::validate(&fit.model).is_ok());
    }

    #[test]
    fn single_value_range_returns_that_fit() {
        let x = gaussian_blobs(&[(0.0, 0.0), (5.0, 0.0), (0.0, 5.0)], 40, 0.7, 3);
        let sel = select_gmm_bic(&x, &[3], &EmOptions::default()).unwrap();
        assert_eq!(sel.fit.model.kappa(), 3);
        assert!(select_gmm_bic(&x, &[], &EmOptions::default()).is_err());
    }

    #[test]
    fn too_few_points() {
        let x = gaussian_blobs(&[(0.0, 0.0)], 3, 1.0, 4);
        assert!(fit_gmm_em(&x, 3, &EmOptions::default()).is_err());
    }

    #[test]
    fn duplicate_points_are_degenerate() {
        let x = DataMatrix::new(6, 1, vec![1.0, 1.0, 1.0, 1.0, 1.0, 2.0]).unwrap();
        assert!(matches!(
            fit_gmm_em(&x, 2, &EmOptions::default()),
            Err(Error::Degenerate(_))
        ));
    }
}
