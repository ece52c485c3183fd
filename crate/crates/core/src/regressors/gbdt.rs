//! Gradient-boosted trees with squared-error loss.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::{self, Real};
use crate::rng::{shuffle, stream};

use super::tree::{grow_tree, FeatureSampling, SortedColumns, Tree, TreeParams};
use super::{check_training_data, Regressor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams<T> {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: T,
    pub subsample: T,
    pub colsample_bytree: T,
    pub gamma: T,
    pub lambda: T,
    pub min_child_weight: T,
    pub seed: u64,
}

impl<T: Real> Default for Hyperparams<T> {
    fn default() -> Self {
        Self {
            n_estimators: 200,
            max_depth: 8,
            learning_rate: T::lit(0.05),
            subsample: T::lit(0.8),
            colsample_bytree: T::lit(0.8),
            gamma: T::lit(0.1),
            lambda: T::one(),
            min_child_weight: T::one(),
            seed: 42,
        }
    }
}

impl<T: Real> Hyperparams<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: T, name: &str| {
            if v > T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        unit(self.subsample, "subsample")?;
        unit(self.colsample_bytree, "colsample_bytree")?;
        if !(self.learning_rate >= T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if !(self.gamma >= T::zero()) || !(self.lambda >= T::zero()) || !(self.min_child_weight >= T::zero()) {
            return Err(Error::Config("gamma, lambda and min_child_weight must be >= 0".into()));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams<T> {
        TreeParams {
            max_depth: self.max_depth,
            lambda: self.lambda,
            gamma: self.gamma,
            min_child_weight: self.min_child_weight,
            sampling: if self.colsample_bytree >= T::one() {
                FeatureSampling::All
            } else {
                FeatureSampling::PerTree(self.colsample_bytree)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel<T> {
    pub base_score: T,
    pub learning_rate: T,
    pub trees: Vec<Tree<T>>,
    pub feature_names: Vec<String>,
}

impl<T: Real> GbdtModel<T> {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Sum of raw tree outputs, before shrinkage.
    pub fn tree_sum(&self, row: &[T]) -> T {
        self.trees.iter().map(|t| t.predict_row(row)).sum()
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.feature_names.len() {
            return Err(Error::Input(format!(
                "model has {} features, {} names given",
                self.feature_names.len(),
                names.len()
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn check_integrity(&self) -> Result<()> {
        for (i, t) in self.trees.iter().enumerate() {
            t.check_integrity().map_err(|e| Error::ModelIntegrity(format!("tree {i}: {e}")))?;
            if let Some(&f) = t.features_used().last() {
                if f >= self.feature_names.len() {
                    return Err(Error::ModelIntegrity(format!("tree {i} uses feature {f} beyond the feature list")));
                }
            }
        }
        Ok(())
    }
}

impl<T: Real> Regressor<T> for GbdtModel<T> {
    fn predict_row(&self, row: &[T]) -> T {
        self.base_score + self.learning_rate * self.tree_sum(row)
    }
}

/// Rows drawn for boosting round `round`: the first `round(frac·n)` entries of a
/// seeded shuffle of `0..n`.
pub fn subsample_rows<T: Real>(n: usize, frac: T, seed: u64, round: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if frac >= T::one() {
        return idx;
    }
    shuffle(&mut stream(seed, "gbdt-subsample", round as u64), &mut idx);
    let k = (frac * T::count(n)).round().to_usize().unwrap_or(n).clamp(1, n);
    idx.truncate(k);
    idx
}

pub fn fit_gbdt<T: Real>(x: &Matrix<T>, y: &[T], params: &Hyperparams<T>) -> Result<GbdtModel<T>> {
    fit_gbdt_with(x, y, params, |round| subsample_rows(x.rows(), params.subsample, params.seed, round))
}

/// Like [`fit_gbdt`] with caller-supplied row subsets per round.
pub fn fit_gbdt_with<T: Real, F>(x: &Matrix<T>, y: &[T], params: &Hyperparams<T>, mut rows_for_round: F) -> Result<GbdtModel<T>>
where
    F: FnMut(usize) -> Vec<usize>,
{
    check_training_data(x, y)?;
    params.validate()?;
    let n = x.rows();
    let base_score = real::mean(y).unwrap_or_else(T::zero);
    let tree_params = params.tree_params();
    let sorted = SortedColumns::new(x);
    let mut pred = vec![base_score; n];
    let mut grad = vec![T::zero(); n];
    let hess = vec![T::one(); n];
    let mut active = vec![false; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    for round in 0..params.n_estimators {
        active.iter_mut().for_each(|a| *a = false);
        for r in rows_for_round(round) {
            if r >= n {
                return Err(Error::Input(format!("subsample row {r} out of range")));
            }
            active[r] = true;
        }
        for r in 0..n {
            grad[r] = pred[r] - y[r];
        }
        let mut rng = stream(params.seed, "gbdt-tree", round as u64);
        let tree = grow_tree(x, &sorted, &active, &grad, &hess, &tree_params, &mut rng)?;
        for (r, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict_row(x.row(r));
        }
        trees.push(tree);
    }
    log::debug!("fitted {} trees on {} rows", trees.len(), n);
    Ok(GbdtModel {
        base_score,
        learning_rate: params.learning_rate,
        trees,
        feature_names: (0..x.cols()).map(|j| format!("f{j}")).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Matrix<f64> {
        Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn constant_target() {
        let x = line(20);
        let y = vec![3.5; 20];
        let m = fit_gbdt(&x, &y, &Hyperparams { n_estimators: 5, ..Default::default() }).unwrap();
        assert_eq!(m.base_score, 3.5);
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1 && t.predict_row(&[0.0]) == 0.0));
        assert_eq!(m.predict_row(&[7.0]), 3.5);
    }

    #[test]
    fn zero_learning_rate() {
        let x = line(30);
        let y: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let p = Hyperparams { n_estimators: 4, learning_rate: 0.0, ..Default::default() };
        let m = fit_gbdt(&x, &y, &p).unwrap();
        assert!(m.predict(&x).iter().all(|v| *v == m.base_score));
    }

    #[test]
    fn nonfinite_rejected() {
        let x = line(3);
        assert!(fit_gbdt(&x, &[1.0, f64::NAN, 2.0], &Hyperparams::default()).is_err());
    }

    #[test]
    fn root_cover_is_subsample_size() {
        let x = line(50);
        let y: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let m = fit_gbdt(&x, &y, &Hyperparams { n_estimators: 3, ..Default::default() }).unwrap();
        for t in &m.trees {
            assert_eq!(t.nodes[0].cover(), 40.0);
            t.check_integrity().unwrap();
        }
    }

    #[test]
    fn invalid_params() {
        let p = Hyperparams::<f64> { subsample: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
        assert!(Hyperparams::<f64>::default().validate().is_ok());
    }
}
