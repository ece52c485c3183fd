//! Aggregation of per-feature attributions into triad dimensions.

use crate::error::{Error, Result};
use crate::real::{self, Real};
use crate::regressors::OlsModel;
use crate::matrix::Matrix;
use crate::schema::{Dimension, TriadSchema};

use super::treeshap::ShapMatrix;

/// Per-segment dimension sums, indexed by [`Dimension::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroupContribution<T> {
    pub feature_dims: Vec<Dimension>,
    pub sums: Vec<[T; 4]>,
    /// Σ max(0, −φᵢ) over each dimension's members.
    pub negative: Vec<[T; 4]>,
    /// Share of total absolute attribution carried by each dimension.
    pub shares: [T; 4],
}

impl<T: Real> GroupContribution<T> {
    pub fn share(&self, d: Dimension) -> T {
        self.shares[d.index()]
    }

    pub fn sum(&self, row: usize, d: Dimension) -> T {
        self.sums[row][d.index()]
    }
}

pub fn group_shap<T: Real>(shap: &ShapMatrix<T>, schema: &TriadSchema) -> Result<GroupContribution<T>> {
    let feature_dims = shap.feature_names.iter().map(|n| schema.classify(n)).collect::<Result<Vec<_>>>()?;
    let n = shap.values.rows();
    let mut sums = vec![[T::zero(); 4]; n];
    let mut negative = vec![[T::zero(); 4]; n];
    let mut abs = [T::zero(); 4];
    for r in 0..n {
        for (j, &phi) in shap.values.row(r).iter().enumerate() {
            let d = feature_dims[j].index();
            sums[r][d] += phi;
            negative[r][d] += (-phi).max(T::zero());
            abs[d] += phi.abs();
        }
    }
    let total: T = abs.iter().copied().sum();
    let shares = if total > T::zero() {
        abs.map(|a| a / total)
    } else {
        log::warn!("all attributions are zero; dimension shares set to 0");
        [T::zero(); 4]
    };
    Ok(GroupContribution { feature_dims, sums, negative, shares })
}

/// (feature value, φ) per row, sorted by value then row order.
pub fn dependence_table<T: Real>(shap: &ShapMatrix<T>, x: &Matrix<T>, feature: &str) -> Result<Vec<(T, T)>> {
    let j = shap.feature_index(feature).ok_or_else(|| Error::Lookup { kind: "feature", id: feature.to_string() })?;
    if x.rows() != shap.values.rows() || x.cols() != shap.values.cols() {
        return Err(Error::Input("feature matrix does not match SHAP matrix shape".into()));
    }
    let mut pairs: Vec<(T, T)> = (0..x.rows()).map(|r| (x.get(r, j), shap.values.get(r, j))).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(pairs)
}

/// Exact linear-model attributions βᵢ(xᵢ − x̄ᵢ), with x̄ taken over `x`.
pub fn ols_attributions<T: Real>(model: &OlsModel<T>, x: &Matrix<T>, feature_names: &[String]) -> Result<ShapMatrix<T>> {
    if x.cols() != model.coefficients.len() || feature_names.len() != x.cols() {
        return Err(Error::Input("coefficient count does not match columns".into()));
    }
    let means: Vec<T> = (0..x.cols()).map(|j| real::mean(&x.column(j)).unwrap_or_else(T::zero)).collect();
    let mut values = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        for j in 0..x.cols() {
            values.set(r, j, model.coefficients[j] * (x.get(r, j) - means[j]));
        }
    }
    let base_value = model.intercept + model.coefficients.iter().zip(&means).map(|(b, m)| *b * *m).sum::<T>();
    Ok(ShapMatrix { base_value, values, feature_names: feature_names.to_vec() })
}
