//! Deterministic `P_mc` by adaptive Gauss-Kronrod quadrature, for one or
//! two dimensions. Used to cross-check the Monte Carlo estimator.

use super::posterior::Posterior;
use super::Rule;
use crate::data::{ClusterConfiguration, MixtureModel};
use crate::error::{Error, Result};

pub const ABS_TOL: f64 = 1e-8;
const BOX_SDS: f64 = 10.0;
const MAX_INTERVALS: usize = 20_000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod value and its difference from the embedded 7-point
/// Gauss rule.
fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive integration of `f` over `[a, b]`, starting from
/// `pieces` equal subintervals and bisecting the worst one until the summed
/// error estimate falls below `tol`. Returns the value and error estimate.
pub fn integrate_adaptive(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, pieces: usize, tol: f64) -> (f64, f64) {
    let pieces = pieces.max(1);
    let w = (b - a) / pieces as f64;
    let mut iv: Vec<(f64, f64, f64, f64)> = (0..pieces)
        .map(|i| {
            let lo = a + w * i as f64;
            let hi = if i + 1 == pieces { b } else { lo + w };
            let (v, e) = gk15(&mut f, lo, hi);
            (lo, hi, v, e)
        })
        .collect();
    loop {
        let err: f64 = iv.iter().map(|t| t.3).sum();
        if err <= tol || iv.len() >= MAX_INTERVALS {
            let val = iv.iter().map(|t| t.2).sum();
            return (val, err);
        }
        let worst = iv
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _, _) = iv[worst];
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        iv[worst] = (lo, mid, v1, e1);
        iv.push((mid, hi, v2, e2));
    }
}

/// Integration box along coordinate `d` and the narrowest component spread.
fn bounds(model: &MixtureModel, d: usize) -> (f64, f64, f64) {
    let p = model.dim();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut narrow = f64::INFINITY;
    for c in model.components() {
        let sd = c.covariance()[d * p + d].sqrt();
        lo = lo.min(c.mean()[d] - BOX_SDS * sd);
        hi = hi.max(c.mean()[d] + BOX_SDS * sd);
        narrow = narrow.min(sd);
    }
    (lo, hi, narrow)
}

fn pieces(lo: f64, hi: f64, narrow: f64) -> usize {
    ((hi - lo) / narrow).ceil().clamp(8.0, 400.0) as usize
}

/// `P_mc` by numerical integration over every component mean +- 10
/// standard deviations, to an absolute tolerance of 1e-8.
pub fn pmc_quadrature(model: &MixtureModel, config: &ClusterConfiguration, rule: Rule) -> Result<f64> {
    config.check_against(model)?;
    let p = model.dim();
    if p > 2 {
        return Err(Error::Unsupported(format!(
            "quadrature is available in one or two dimensions, data has {p}"
        )));
    }
    if config.k() == 1 {
        return Ok(0.0);
    }
    let post = Posterior::new(model, config)?;
    let mut ws = post.workspace();
    let mut pi = vec![0.0; config.k()];
    let mut integrand = |x: &[f64]| {
        let lp = post.eval(x, &mut ws, &mut pi);
        if lp == f64::NEG_INFINITY {
            0.0
        } else {
            lp.exp() * rule.summand(&pi)
        }
    };
    let (lo0, hi0, n0) = bounds(model, 0);
    let value = if p == 1 {
        integrate_adaptive(|t| integrand(&[t]), lo0, hi0, pieces(lo0, hi0, n0), ABS_TOL).0
    } else {
        let (lo1, hi1, n1) = bounds(model, 1);
        let inner_tol = 0.1 * ABS_TOL / (hi0 - lo0);
        let inner_pieces = pieces(lo1, hi1, n1);
        integrate_adaptive(
            |s| integrate_adaptive(|t| integrand(&[s, t]), lo1, hi1, inner_pieces, inner_tol).0,
            lo0,
            hi0,
            pieces(lo0, hi0, n0),
            0.9 * ABS_TOL,
        )
        .0
    };
    Ok(value.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GaussianComponent;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_polynomial_and_gaussian() {
        let (v, _) = integrate_adaptive(|x| x * x, 0.0, 3.0, 1, 1e-12);
        assert_relative_eq!(v, 9.0, epsilon = 1e-12);
        let (v, _) = integrate_adaptive(|x| (-0.5 * x * x).exp(), -12.0, 12.0, 4, 1e-12);
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-11);
    }

    #[test]
    fn two_gaussian_optimal_rule_is_phi() {
        let m = MixtureModel::new(
            vec![0.5, 0.5],
            vec![
                GaussianComponent::new(vec![0.0], vec![1.0]).unwrap(),
                GaussianComponent::new(vec![3.0], vec![1.0]).unwrap(),
            ],
        )
        .unwrap();
        let v = pmc_quadrature(&m, &ClusterConfiguration::singletons(2), Rule::Optimal).unwrap();
        // Phi(-1.5)
        assert_relative_eq!(v, 0.066_807_201_268_858_06, epsilon = 1e-8);
    }

    #[test]
    fn rejects_three_dimensions() {
        let m = MixtureModel::new(
            vec![1.0],
            vec![GaussianComponent::new(vec![0.0; 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap()],
        )
        .unwrap();
        let err = pmc_quadrature(&m, &ClusterConfiguration::single(1), Rule::Randomized).unwrap_err();
        assert_eq!(err.kind(), "unsupported");
    }

    #[test]
    fn single_cluster_is_zero() {
        let m = MixtureModel::new(
            vec![0.5, 0.5],
            vec![
                GaussianComponent::new(vec![0.0], vec![1.0]).unwrap(),
                GaussianComponent::new(vec![0.5], vec![1.0]).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(pmc_quadrature(&m, &ClusterConfiguration::single(2), Rule::Randomized).unwrap(), 0.0);
    }
}
