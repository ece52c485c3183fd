//! Boosted trees, random forest and least squares, with cross-validation and search.

pub mod cv;
pub mod forest;
pub mod gbdt;
pub mod model_io;
pub mod ols;
pub mod search;
pub mod tree;

pub use cv::{cross_validate, fold_assignment, r2_score, rmse, CvReport, FoldScore};
pub use forest::{fit_forest, ForestModel, ForestParams, MaxFeatures};
pub use gbdt::{fit_gbdt, fit_gbdt_with, subsample_rows, GbdtModel, Hyperparams};
pub use model_io::{load_model, read_model, save_model, write_model};
pub use ols::{fit_ols, OlsModel};
pub use search::{random_search, SearchEntry, SearchResult, SearchSpace};
pub use tree::{fit_tree, root_split, FeatureSampling, Split, Tree, TreeNode, TreeParams};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;

pub trait Regressor<T: Real>: Send + Sync {
    fn predict_row(&self, row: &[T]) -> T;

    fn predict(&self, x: &Matrix<T>) -> Vec<T> {
        (0..x.rows()).map(|r| self.predict_row(x.row(r))).collect()
    }
}

/// Something that can be fitted, e.g. inside cross-validation.
pub trait Learner<T: Real>: Sync {
    type Model: Regressor<T>;
    fn fit(&self, x: &Matrix<T>, y: &[T]) -> Result<Self::Model>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec<T> {
    Gbdt(Hyperparams<T>),
    Forest(ForestParams),
    Ols,
}

impl<T> ModelSpec<T> {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Gbdt(_) => "gbdt",
            ModelSpec::Forest(_) => "random_forest",
            ModelSpec::Ols => "ols",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel<T> {
    Gbdt(GbdtModel<T>),
    Forest(ForestModel<T>),
    Ols(OlsModel<T>),
}

impl<T: Real> Regressor<T> for FittedModel<T> {
    fn predict_row(&self, row: &[T]) -> T {
        match self {
            FittedModel::Gbdt(m) => m.predict_row(row),
            FittedModel::Forest(m) => m.predict_row(row),
            FittedModel::Ols(m) => m.predict_row(row),
        }
    }
}

impl<T: Real> Learner<T> for ModelSpec<T> {
    type Model = FittedModel<T>;

    fn fit(&self, x: &Matrix<T>, y: &[T]) -> Result<FittedModel<T>> {
        Ok(match self {
            ModelSpec::Gbdt(p) => FittedModel::Gbdt(fit_gbdt(x, y, p)?),
            ModelSpec::Forest(p) => FittedModel::Forest(fit_forest(x, y, p)?),
            ModelSpec::Ols => FittedModel::Ols(fit_ols(x, y)?),
        })
    }
}

/// Both baselines at once.
pub fn fit_baselines<T: Real>(x: &Matrix<T>, y: &[T], forest: &ForestParams) -> Result<(OlsModel<T>, ForestModel<T>)> {
    Ok((fit_ols(x, y)?, fit_forest(x, y, forest)?))
}

pub(crate) fn check_training_data<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::Empty("empty training set".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::Input(format!("{} rows but {} targets", x.rows(), y.len())));
    }
    if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("training data contains non-finite values".into()));
    }
    Ok(())
}
