//! Small dense helpers on row-major `Vec<f64>` matrices.
//!
//! Dimensions here are small (a handful of features), so the hot loops use
//! flat slices instead of going through nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Lower Cholesky factor of a symmetric matrix, or `None` if it is not
/// positive definite.
pub fn cholesky(a: &[f64], p: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), p * p);
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    Some(l)
}

/// Squared norm of `L^{-1} v`, using `scratch` (length p) as workspace.
#[inline]
pub fn forward_solve_norm2(l: &[f64], p: usize, v: &[f64], scratch: &mut [f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..p {
        let row = &l[i * p..i * p + i];
        let mut s = v[i];
        for (lk, yk) in row.iter().zip(&scratch[..i]) {
            s -= lk * yk;
        }
        let y = s / l[i * p + i];
        scratch[i] = y;
        acc += y * y;
    }
    acc
}

/// Cached factorization of a Gaussian covariance.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    pub p: usize,
    pub lower: Vec<f64>,
    /// `-0.5 * (p ln 2π + ln det Σ)`
    pub log_norm: f64,
}

impl GaussianFactor {
    pub fn new(cov: &[f64], p: usize) -> Option<Self> {
        let lower = cholesky(cov, p)?;
        let log_det: f64 = (0..p).map(|i| lower[i * p + i].ln()).sum::<f64>() * 2.0;
        Some(Self {
            p,
            lower,
            log_norm: -0.5 * (p as f64 * LN_2PI + log_det),
        })
    }

    /// Log-density at `x`; `diff` and `scratch` are length-p workspaces.
    #[inline]
    pub fn log_density(&self, mean: &[f64], x: &[f64], diff: &mut [f64], scratch: &mut [f64]) -> f64 {
        for ((d, xi), mi) in diff.iter_mut().zip(x).zip(mean) {
            *d = xi - mi;
        }
        self.log_norm - 0.5 * forward_solve_norm2(&self.lower, self.p, diff, scratch)
    }

    /// Writes `mean + L z` into `out`.
    #[inline]
    pub fn transform(&self, mean: &[f64], z: &[f64], out: &mut [f64]) {
        let p = self.p;
        for i in 0..p {
            let row = &self.lower[i * p..i * p + i + 1];
            out[i] = mean[i] + row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &[f64], p: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(p, p, a);
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Largest-to-smallest eigenvalue ratio; infinite when not positive definite.
pub fn condition_number(a: &[f64], p: usize) -> f64 {
    let ev = symmetric_eigenvalues(a, p);
    let (lo, hi) = (ev[0], ev[p - 1]);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Sum of `xs` accumulated in ascending order, independent of input order.
pub fn sorted_sum(xs: &mut [f64]) -> f64 {
    xs.sort_unstable_by(f64::total_cmp);
    xs.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert_relative_eq!(v, a[i * 3 + j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_matrix_has_no_factor() {
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
        let ev = symmetric_eigenvalues(&[1.0, 2.0, 2.0, 1.0], 2);
        assert_relative_eq!(ev[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(ev[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn standard_normal_log_density() {
        let f = GaussianFactor::new(&[1.0], 1).unwrap();
        let (mut d, mut s) = ([0.0], [0.0]);
        let v = f.log_density(&[0.0], &[1.0], &mut d, &mut s);
        assert_relative_eq!(v, -0.5 * LN_2PI - 0.5, epsilon = 1e-14);
    }
}
