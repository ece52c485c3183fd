//! Path-dependent TreeSHAP: exact Shapley values of the cover-conditional
//! expectation game, in polynomial time per tree.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;
use crate::regressors::{GbdtModel, Tree, TreeNode};

#[derive(Debug, Clone, PartialEq)]
pub struct ShapMatrix<T> {
    pub base_value: T,
    /// Rows × features.
    pub values: Matrix<T>,
    pub feature_names: Vec<String>,
}

impl<T: Real> ShapMatrix<T> {
    pub fn row_sum(&self, r: usize) -> T {
        self.values.row(r).iter().copied().sum()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PathElem<T> {
    feature: usize,
    zero_fraction: T,
    one_fraction: T,
    weight: T,
}

const NO_FEATURE: usize = usize::MAX;

fn extend<T: Real>(path: &mut [PathElem<T>], depth: usize, zero: T, one: T, feature: usize) {
    path[depth] = PathElem {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        weight: if depth == 0 { T::one() } else { T::zero() },
    };
    let d1 = T::count(depth + 1);
    for i in (0..depth).rev() {
        let w = path[i].weight;
        path[i + 1].weight += one * w * T::count(i + 1) / d1;
        path[i].weight = zero * w * T::count(depth - i) / d1;
    }
}

fn unwind<T: Real>(path: &mut [PathElem<T>], depth: usize, index: usize) {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = T::count(depth + 1);
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != T::zero() {
            let tmp = path[i].weight;
            path[i].weight = next * d1 / (T::count(i + 1) * one);
            next = tmp - path[i].weight * zero * T::count(depth - i) / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero * T::count(depth - i));
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

fn unwound_sum<T: Real>(path: &[PathElem<T>], depth: usize, index: usize) -> T {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = T::count(depth + 1);
    let mut next = path[depth].weight;
    let mut total = T::zero();
    for i in (0..depth).rev() {
        if one != T::zero() {
            let tmp = next * d1 / (T::count(i + 1) * one);
            total += tmp;
            next = path[i].weight - tmp * zero * T::count(depth - i) / d1;
        } else {
            total += path[i].weight * d1 / (zero * T::count(depth - i));
        }
    }
    total
}

struct Walker<'a, T> {
    tree: &'a Tree<T>,
    row: &'a [T],
    phi: &'a mut [T],
    buf: Vec<PathElem<T>>,
}

impl<T: Real> Walker<'_, T> {
    /// `parent` is where the parent's path (of `depth` elements) starts in `buf`.
    fn recurse(&mut self, node: usize, parent: usize, depth: usize, zero: T, one: T, feature: usize) {
        let start = parent + depth;
        self.buf.copy_within(parent..parent + depth, start);
        let mut depth = depth;
        extend(&mut self.buf[start..], depth, zero, one, feature);
        match self.tree.nodes[node] {
            TreeNode::Leaf { value, .. } => {
                let path = &self.buf[start..];
                for i in 1..=depth {
                    let w = unwound_sum(path, depth, i);
                    let e = path[i];
                    self.phi[e.feature] += w * (e.one_fraction - e.zero_fraction) * value;
                }
            }
            TreeNode::Internal { feature: f, threshold, left, right, cover } => {
                let (hot, cold) = if self.row[f] < threshold { (left, right) } else { (right, left) };
                let hot_zero = self.tree.nodes[hot].cover() / cover;
                let cold_zero = self.tree.nodes[cold].cover() / cover;
                let mut in_zero = T::one();
                let mut in_one = T::one();
                if let Some(k) = (1..=depth).find(|&k| self.buf[start + k].feature == f) {
                    in_zero = self.buf[start + k].zero_fraction;
                    in_one = self.buf[start + k].one_fraction;
                    unwind(&mut self.buf[start..], depth, k);
                    depth -= 1;
                }
                self.recurse(hot, start, depth + 1, hot_zero * in_zero, in_one, f);
                self.recurse(cold, start, depth + 1, cold_zero * in_zero, T::zero(), f);
            }
        }
    }
}

/// Adds one tree's (unscaled) SHAP values for `row` into `phi`.
pub fn tree_shap_row<T: Real>(tree: &Tree<T>, row: &[T], phi: &mut [T]) {
    let d = tree.depth() + 2;
    let mut w = Walker { tree, row, phi, buf: vec![PathElem { feature: NO_FEATURE, ..Default::default() }; d * (d + 1)] };
    w.recurse(0, 0, 0, T::one(), T::one(), NO_FEATURE);
}

fn check_model<T: Real>(model: &GbdtModel<T>) -> Result<()> {
    model.check_integrity()
}

/// Model's expected output under cover weighting.
pub fn expected_value<T: Real>(model: &GbdtModel<T>) -> T {
    model.base_score + model.learning_rate * model.trees.iter().map(|t| t.expected_value()).sum::<T>()
}

/// SHAP values for every row of `x`, whose columns follow `model.feature_names`.
pub fn tree_shap<T: Real>(model: &GbdtModel<T>, x: &Matrix<T>) -> Result<ShapMatrix<T>> {
    check_model(model)?;
    let p = model.n_features();
    if x.cols() != p {
        return Err(Error::Input(format!("model has {p} features, matrix has {} columns", x.cols())));
    }
    let rows: Vec<Vec<T>> = (0..x.rows())
        .into_par_iter()
        .map(|r| {
            let mut phi = vec![T::zero(); p];
            for tree in &model.trees {
                tree_shap_row(tree, x.row(r), &mut phi);
            }
            phi.iter_mut().for_each(|v| *v *= model.learning_rate);
            phi
        })
        .collect();
    let mut values = Matrix::zeros(x.rows(), p);
    for (r, phi) in rows.iter().enumerate() {
        for (j, v) in phi.iter().enumerate() {
            values.set(r, j, *v);
        }
    }
    Ok(ShapMatrix { base_value: expected_value(model), values, feature_names: model.feature_names.clone() })
}
