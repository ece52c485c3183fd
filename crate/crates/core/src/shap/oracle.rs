//! Brute-force Shapley values by enumerating every feature subset.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::regressors::{GbdtModel, Tree, TreeNode};

pub const ORACLE_MAX_FEATURES: usize = 20;

/// Tree output with features outside `mask` marginalized by cover proportions.
fn conditional_value<T: Real>(tree: &Tree<T>, node: usize, row: &[T], mask: u32) -> T {
    match tree.nodes[node] {
        TreeNode::Leaf { value, .. } => value,
        TreeNode::Internal { feature, threshold, left, right, cover } => {
            if mask & (1 << feature) != 0 {
                let next = if row[feature] < threshold { left } else { right };
                conditional_value(tree, next, row, mask)
            } else {
                let l = conditional_value(tree, left, row, mask) * tree.nodes[left].cover();
                let r = conditional_value(tree, right, row, mask) * tree.nodes[right].cover();
                (l + r) / cover
            }
        }
    }
}

pub fn shapley_oracle<T: Real>(model: &GbdtModel<T>, row: &[T]) -> Result<Vec<T>> {
    let n = model.n_features();
    if n > ORACLE_MAX_FEATURES {
        return Err(Error::Size(format!("subset oracle limited to {ORACLE_MAX_FEATURES} features, model has {n}")));
    }
    if row.len() != n {
        return Err(Error::Input(format!("row has {} values, model has {n} features", row.len())));
    }
    model.check_integrity()?;
    let subsets = 1usize << n;
    let value: Vec<T> = (0..subsets)
        .map(|mask| {
            let s: T = model.trees.iter().map(|t| conditional_value(t, 0, row, mask as u32)).sum();
            model.learning_rate * s
        })
        .collect();
    // |S|!(n-|S|-1)!/n! for every |S|.
    let mut fact = vec![T::one(); n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * T::count(k);
    }
    let weight: Vec<T> = (0..n).map(|s| fact[s] * fact[n - s - 1] / fact[n]).collect();
    let mut phi = vec![T::zero(); n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..subsets {
            if mask & bit == 0 {
                *p += weight[mask.count_ones() as usize] * (value[mask | bit] - value[mask]);
            }
        }
    }
    Ok(phi)
}
