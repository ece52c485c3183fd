//! Randomized hyperparameter search over a discrete grid.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;
use crate::rng::stream;

use super::cv::{cross_validate, CvReport};
use super::gbdt::Hyperparams;
use super::ModelSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace<T> {
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<T>,
    pub subsample: Vec<T>,
    pub colsample_bytree: Vec<T>,
    pub gamma: Vec<T>,
    pub n_estimators: Vec<usize>,
    /// Fixed settings not searched over.
    pub lambda: T,
    pub min_child_weight: T,
}

impl<T: Real> Default for SearchSpace<T> {
    fn default() -> Self {
        let v = |xs: &[f64]| xs.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        Self {
            max_depth: vec![3, 4, 5, 6, 8],
            learning_rate: v(&[0.01, 0.05, 0.1, 0.2]),
            subsample: v(&[0.6, 0.8, 1.0]),
            colsample_bytree: v(&[0.6, 0.8, 1.0]),
            gamma: v(&[0.0, 0.1, 0.5, 1.0]),
            n_estimators: vec![200],
            lambda: T::one(),
            min_child_weight: T::one(),
        }
    }
}

impl<T: Real> SearchSpace<T> {
    pub fn single(p: &Hyperparams<T>) -> Self {
        Self {
            max_depth: vec![p.max_depth],
            learning_rate: vec![p.learning_rate],
            subsample: vec![p.subsample],
            colsample_bytree: vec![p.colsample_bytree],
            gamma: vec![p.gamma],
            n_estimators: vec![p.n_estimators],
            lambda: p.lambda,
            min_child_weight: p.min_child_weight,
        }
    }

    fn dims(&self) -> [usize; 6] {
        [
            self.max_depth.len(),
            self.learning_rate.len(),
            self.subsample.len(),
            self.colsample_bytree.len(),
            self.gamma.len(),
            self.n_estimators.len(),
        ]
    }

    pub fn size(&self) -> usize {
        self.dims().iter().product()
    }

    /// Grid point by mixed-radix index (max_depth varies slowest).
    pub fn point(&self, mut index: usize, seed: u64) -> Hyperparams<T> {
        let d = self.dims();
        let mut digit = [0usize; 6];
        for i in (0..6).rev() {
            digit[i] = index % d[i];
            index /= d[i];
        }
        Hyperparams {
            max_depth: self.max_depth[digit[0]],
            learning_rate: self.learning_rate[digit[1]],
            subsample: self.subsample[digit[2]],
            colsample_bytree: self.colsample_bytree[digit[3]],
            gamma: self.gamma[digit[4]],
            n_estimators: self.n_estimators[digit[5]],
            lambda: self.lambda,
            min_child_weight: self.min_child_weight,
            seed,
        }
    }

    pub fn contains(&self, p: &Hyperparams<T>) -> bool {
        self.max_depth.contains(&p.max_depth)
            && self.learning_rate.contains(&p.learning_rate)
            && self.subsample.contains(&p.subsample)
            && self.colsample_bytree.contains(&p.colsample_bytree)
            && self.gamma.contains(&p.gamma)
            && self.n_estimators.contains(&p.n_estimators)
            && p.lambda == self.lambda
            && p.min_child_weight == self.min_child_weight
    }

    pub fn validate(&self) -> Result<()> {
        if self.size() == 0 {
            return Err(Error::Config("search space has an empty dimension".into()));
        }
        for i in 0..self.size() {
            self.point(i, 0).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchEntry<T> {
    pub draw: usize,
    pub grid_index: usize,
    pub params: Hyperparams<T>,
    pub report: CvReport<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult<T> {
    pub best: Hyperparams<T>,
    pub best_draw: usize,
    pub log: Vec<SearchEntry<T>>,
}

/// Grid indices drawn uniformly without replacement (all of them if the grid is smaller).
pub fn draw_indices(space_size: usize, n_draws: usize, seed: u64) -> Vec<usize> {
    let k = n_draws.min(space_size);
    sample(&mut stream(seed, "search-draws", 0), space_size, k).into_vec()
}

fn better<T: Real>(a: &CvReport<T>, b: &CvReport<T>) -> bool {
    let key = |v: T| if v.is_nan() { T::neg_infinity() } else { v };
    let (ra, rb) = (key(a.r2_mean), key(b.r2_mean));
    ra > rb || (ra == rb && a.rmse_mean < b.rmse_mean)
}

/// Every draw is cross-validated with the same fold seed and model seed.
pub fn random_search<T: Real>(
    x: &Matrix<T>,
    y: &[T],
    space: &SearchSpace<T>,
    n_draws: usize,
    k: usize,
    seed: u64,
) -> Result<SearchResult<T>> {
    space.validate()?;
    let mut log = Vec::new();
    for (draw, grid_index) in draw_indices(space.size(), n_draws, seed).into_iter().enumerate() {
        let params = space.point(grid_index, seed);
        let report = cross_validate(x, y, &ModelSpec::Gbdt(params), k, seed)?;
        log::info!("search draw {draw}: grid point {grid_index}, mean R² {}", report.r2_mean);
        log.push(SearchEntry { draw, grid_index, params, report });
    }
    let mut best_draw = 0;
    for (i, e) in log.iter().enumerate().skip(1) {
        if better(&e.report, &log[best_draw].report) {
            best_draw = i;
        }
    }
    let best = log.get(best_draw).map(|e| e.params).ok_or_else(|| Error::Config("no search draws".into()))?;
    Ok(SearchResult { best, best_draw, log })
}
