//! k-fold cross-validation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::{self, Real};
use crate::rng::{shuffle, stream};

use super::{Learner, Regressor};

#[derive(Debug, Clone, PartialEq)]
pub struct FoldScore<T> {
    /// `None` when the held-out targets have zero variance.
    pub r2: Option<T>,
    pub rmse: T,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport<T> {
    pub folds: Vec<FoldScore<T>>,
    pub r2_mean: T,
    pub r2_std: T,
    pub rmse_mean: T,
    pub rmse_std: T,
    pub seed: u64,
}

/// Out-of-sample R² against the test fold's own mean.
pub fn r2_score<T: Real>(y: &[T], pred: &[T]) -> Option<T> {
    let mu = real::mean(y)?;
    let ss_tot: T = y.iter().map(|v| (*v - mu) * (*v - mu)).sum();
    if ss_tot == T::zero() {
        return None;
    }
    let ss_res: T = y.iter().zip(pred).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
    Some(T::one() - ss_res / ss_tot)
}

pub fn rmse<T: Real>(y: &[T], pred: &[T]) -> T {
    let ss: T = y.iter().zip(pred).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
    (ss / T::count(y.len().max(1))).sqrt()
}

/// Fold index per row: contiguous chunks of a seeded shuffle, sizes differing by ≤ 1.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    shuffle(&mut stream(seed, "cv-folds", 0), &mut perm);
    let mut fold = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &r in &perm[at..at + size] {
            fold[r] = f;
        }
        at += size;
    }
    fold
}

fn mean_std<T: Real>(v: &[T]) -> (T, T) {
    if v.is_empty() {
        return (T::nan(), T::nan());
    }
    let mu = real::mean(v).unwrap_or_else(T::zero);
    (mu, real::sample_std(v))
}

pub fn cross_validate<T: Real, L: Learner<T>>(x: &Matrix<T>, y: &[T], learner: &L, k: usize, seed: u64) -> Result<CvReport<T>> {
    if k < 2 {
        return Err(Error::Config(format!("cross-validation needs k >= 2, got {k}")));
    }
    if x.rows() != y.len() {
        return Err(Error::Input("row count differs from target length".into()));
    }
    if x.rows() < k {
        return Err(Error::Size(format!("{} rows is fewer than {k} folds", x.rows())));
    }
    let fold = fold_assignment(x.rows(), k, seed);
    let folds = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..x.rows()).filter(|&r| fold[r] != f).collect();
            let test: Vec<usize> = (0..x.rows()).filter(|&r| fold[r] == f).collect();
            let xt = x.select_rows(&train);
            let yt: Vec<T> = train.iter().map(|&r| y[r]).collect();
            let model = learner.fit(&xt, &yt)?;
            let xv = x.select_rows(&test);
            let yv: Vec<T> = test.iter().map(|&r| y[r]).collect();
            let pred = model.predict(&xv);
            Ok(FoldScore { r2: r2_score(&yv, &pred), rmse: rmse(&yv, &pred), n_test: test.len() })
        })
        .collect::<Result<Vec<_>>>()?;
    let r2s: Vec<T> = folds.iter().filter_map(|f| f.r2).collect();
    if r2s.len() < folds.len() {
        log::warn!("{} fold(s) have zero target variance; R² excluded", folds.len() - r2s.len());
    }
    let rmses: Vec<T> = folds.iter().map(|f| f.rmse).collect();
    let (r2_mean, r2_std) = mean_std(&r2s);
    let (rmse_mean, rmse_std) = mean_std(&rmses);
    Ok(CvReport { folds, r2_mean, r2_std, rmse_mean, rmse_std, seed })
}
