//! Bagged regression trees.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;
use crate::rng::stream;

use super::tree::{grow_tree, FeatureSampling, SortedColumns, Tree, TreeParams};
use super::{check_training_data, Regressor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    /// Every feature at every split.
    Auto,
    Sqrt,
    Log2,
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        let n = n_features as f64;
        let k = match self {
            MaxFeatures::Auto => n_features,
            MaxFeatures::Sqrt => n.sqrt().floor() as usize,
            MaxFeatures::Log2 => n.log2().floor() as usize,
        };
        k.clamp(1, n_features.max(1))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MaxFeatures::Auto => "auto",
            MaxFeatures::Sqrt => "sqrt",
            MaxFeatures::Log2 => "log2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(MaxFeatures::Auto),
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "log2" => Ok(MaxFeatures::Log2),
            other => Err(Error::Config(format!("unknown max_features '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_estimators: 200, max_depth: 8, max_features: MaxFeatures::Auto, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel<T> {
    pub trees: Vec<Tree<T>>,
}

impl<T: Real> Regressor<T> for ForestModel<T> {
    fn predict_row(&self, row: &[T]) -> T {
        let s: T = self.trees.iter().map(|t| t.predict_row(row)).sum();
        s / T::count(self.trees.len())
    }
}

pub fn fit_forest<T: Real>(x: &Matrix<T>, y: &[T], params: &ForestParams) -> Result<ForestModel<T>> {
    check_training_data(x, y)?;
    if params.n_estimators == 0 {
        return Err(Error::Config("random forest needs at least one tree".into()));
    }
    let n = x.rows();
    let sorted = SortedColumns::new(x);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        lambda: T::zero(),
        gamma: T::zero(),
        min_child_weight: T::one(),
        sampling: FeatureSampling::PerSplit(params.max_features.count(x.cols())),
    };
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(params.seed, "rf-tree", t as u64);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.gen_range(0..n)] += 1;
            }
            let active: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
            let hess: Vec<T> = counts.iter().map(|&c| if c > 0 { T::count(c as usize) } else { T::one() }).collect();
            let grad: Vec<T> = (0..n).map(|r| -y[r] * T::count(counts[r] as usize)).collect();
            grow_tree(x, &sorted, &active, &grad, &hess, &tree_params, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel { trees })
}
