//! Ordinary least squares with intercept.

use crate::error::Result;
use crate::matrix::Matrix;
use crate::real::{self, Real};

use super::{check_training_data, Regressor};

pub const RIDGE_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsModel<T> {
    pub intercept: T,
    pub coefficients: Vec<T>,
    /// Set when the normal equations were singular or underdetermined.
    pub ridge_applied: bool,
}

impl<T: Real> Regressor<T> for OlsModel<T> {
    fn predict_row(&self, row: &[T]) -> T {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| *b * *x).sum::<T>()
    }
}

/// In-place Cholesky of a symmetric matrix; `None` if not positive definite.
fn cholesky<T: Real>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > T::zero()) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // Reject numerically singular systems.
    let diag_max = (0..n).map(|i| l[i * n + i]).fold(T::zero(), |m, v| m.max(v));
    let diag_min = (0..n).map(|i| l[i * n + i]).fold(T::infinity(), |m, v| m.min(v));
    if n > 0 && diag_min <= diag_max * T::epsilon().sqrt() * T::lit(1e-2) {
        return None;
    }
    Some(l)
}

fn solve_cholesky<T: Real>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let v = l[i * n + k] * z[k];
            z[i] -= v;
        }
        z[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let v = l[k * n + i] * z[k];
            z[i] -= v;
        }
        z[i] /= l[i * n + i];
    }
    z
}

pub fn fit_ols<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<OlsModel<T>> {
    check_training_data(x, y)?;
    let (n, p) = (x.rows(), x.cols());
    let means: Vec<T> = (0..p).map(|j| real::mean(&x.column(j)).unwrap_or_else(T::zero)).collect();
    let ybar = real::mean(y).unwrap_or_else(T::zero);
    let mut xtx = vec![T::zero(); p * p];
    let mut xty = vec![T::zero(); p];
    for r in 0..n {
        let row = x.row(r);
        let yc = y[r] - ybar;
        for i in 0..p {
            let xi = row[i] - means[i];
            xty[i] += xi * yc;
            for j in 0..=i {
                xtx[i * p + j] += xi * (row[j] - means[j]);
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            xtx[j * p + i] = xtx[i * p + j];
        }
    }
    let mut ridge_applied = false;
    let l = match (n > p).then(|| cholesky(&xtx, p)).flatten() {
        Some(l) => l,
        None => {
            log::warn!("OLS normal equations singular or underdetermined ({n} rows, {p} columns); applying ridge jitter {RIDGE_JITTER}");
            ridge_applied = true;
            let scale = (0..p).map(|i| xtx[i * p + i]).fold(T::one(), |m, v| m.max(v));
            let mut a = xtx.clone();
            let mut jitter = T::lit(RIDGE_JITTER) * scale;
            loop {
                for i in 0..p {
                    a[i * p + i] = xtx[i * p + i] + jitter;
                }
                if let Some(l) = cholesky(&a, p) {
                    break l;
                }
                jitter *= T::lit(10.0);
            }
        }
    };
    let coefficients = solve_cholesky(&l, p, &xty);
    let intercept = ybar - coefficients.iter().zip(&means).map(|(b, m)| *b * *m).sum::<T>();
    Ok(OlsModel { intercept, coefficients, ridge_applied })
}
