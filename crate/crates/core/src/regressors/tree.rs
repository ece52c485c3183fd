//! Level-wise regression trees grown by exact greedy split search over
//! gradient/hessian statistics.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode<T> {
    /// Rows with `x[feature] < threshold` go left.
    Internal { feature: usize, threshold: T, left: usize, right: usize, cover: T },
    Leaf { value: T, cover: T },
}

impl<T: Real> TreeNode<T> {
    pub fn cover(&self) -> T {
        match *self {
            TreeNode::Internal { cover, .. } | TreeNode::Leaf { cover, .. } => cover,
        }
    }
}

/// Binary tree in pre-order; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<T> {
    pub nodes: Vec<TreeNode<T>>,
}

impl<T: Real> Tree<T> {
    pub fn leaf(value: T, cover: T) -> Self {
        Self { nodes: vec![TreeNode::Leaf { value, cover }] }
    }

    pub fn predict_row(&self, row: &[T]) -> T {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value, .. } => return value,
                TreeNode::Internal { feature, threshold, left, right, .. } => {
                    i = if row[feature] < threshold { left } else { right };
                }
            }
        }
    }

    /// Cover-weighted mean leaf value.
    pub fn expected_value(&self) -> T {
        fn walk<T: Real>(t: &Tree<T>, i: usize) -> T {
            match t.nodes[i] {
                TreeNode::Leaf { value, .. } => value,
                TreeNode::Internal { left, right, cover, .. } => {
                    (walk(t, left) * t.nodes[left].cover() + walk(t, right) * t.nodes[right].cover()) / cover
                }
            }
        }
        walk(self, 0)
    }

    pub fn depth(&self) -> usize {
        fn walk<T: Real>(t: &Tree<T>, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }

    pub fn features_used(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Internal { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Checks child links, positive covers and cover additivity (relative 1e-9).
    pub fn check_integrity(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::ModelIntegrity("empty tree".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !(n.cover() > T::zero()) {
                return Err(Error::ModelIntegrity(format!("node {i} has non-positive cover")));
            }
            if let TreeNode::Internal { left, right, cover, .. } = *n {
                if left <= i || right <= i || left >= self.nodes.len() || right >= self.nodes.len() {
                    return Err(Error::ModelIntegrity(format!("node {i} has invalid children")));
                }
                let sum = self.nodes[left].cover() + self.nodes[right].cover();
                if (sum - cover).abs() > T::lit(1e-9) * cover.max(T::one()) {
                    return Err(Error::ModelIntegrity(format!("node {i} cover {cover} != children {sum}")));
                }
            }
        }
        Ok(())
    }
}

/// How candidate split features are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureSampling<T> {
    All,
    /// Fraction of features drawn once per tree (`colsample_bytree`).
    PerTree(T),
    /// Number of features drawn independently at every node.
    PerSplit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams<T> {
    pub max_depth: usize,
    /// L2 penalty on leaf weights.
    pub lambda: T,
    /// Minimum gain to split.
    pub gamma: T,
    pub min_child_weight: T,
    pub sampling: FeatureSampling<T>,
}

impl<T: Real> Default for TreeParams<T> {
    fn default() -> Self {
        Self { max_depth: 6, lambda: T::one(), gamma: T::zero(), min_child_weight: T::one(), sampling: FeatureSampling::All }
    }
}

/// Best split found for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split<T> {
    pub feature: usize,
    pub threshold: T,
    pub gain: T,
}

/// Row indices sorted by each feature's value; shared across trees of a fit.
#[derive(Debug, Clone)]
pub struct SortedColumns<T> {
    order: Vec<Vec<(u32, T)>>,
}

impl<T: Real> SortedColumns<T> {
    pub fn new(x: &Matrix<T>) -> Self {
        let order = (0..x.cols())
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
                idx.sort_by(|&a, &b| {
                    x.get(a as usize, f)
                        .partial_cmp(&x.get(b as usize, f))
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                });
                idx.into_iter().map(|r| (r, x.get(r as usize, f))).collect()
            })
            .collect();
        Self { order }
    }
}

fn score<T: Real>(g: T, h: T, lambda: T) -> T {
    g * g / (h + lambda)
}

fn split_gain<T: Real>(gl: T, hl: T, g: T, h: T, p: &TreeParams<T>) -> T {
    let gr = g - gl;
    let hr = h - hl;
    T::lit(0.5) * (score(gl, hl, p.lambda) + score(gr, hr, p.lambda) - score(g, h, p.lambda)) - p.gamma
}

fn midpoint<T: Real>(a: T, b: T) -> T {
    let m = a + (b - a) / T::lit(2.0);
    if m <= a || m > b {
        b
    } else {
        m
    }
}

fn draw_features<R: Rng + ?Sized>(rng: &mut R, n_features: usize, k: usize) -> Vec<usize> {
    let k = k.clamp(1, n_features.max(1));
    let mut f = sample(rng, n_features, k).into_vec();
    f.sort_unstable();
    f
}

/// Number of features a per-tree fraction keeps (at least one).
pub fn per_tree_count<T: Real>(frac: T, n_features: usize) -> usize {
    (frac * T::count(n_features)).round().to_usize().unwrap_or(1).clamp(1, n_features.max(1))
}

const INACTIVE: u32 = u32::MAX;

/// One frontier scan: best split for every open node given `node_of` routing.
#[allow(clippy::too_many_arguments)]
fn scan_frontier<T: Real>(
    x: &Matrix<T>,
    sorted: &SortedColumns<T>,
    node_of: &[u32],
    grad: &[T],
    hess: &[T],
    totals: &[(T, T)],
    allowed: &[Vec<bool>],
    params: &TreeParams<T>,
) -> Vec<Option<Split<T>>> {
    let n_open = totals.len();
    let mut best: Vec<Option<Split<T>>> = vec![None; n_open];
    // Per open node: left gradient, left hessian, previous value, whether any row was seen.
    let mut acc: Vec<(T, T, T, bool)> = vec![(T::zero(), T::zero(), T::zero(), false); n_open];
    let mut open_for = vec![false; n_open];
    for f in 0..x.cols() {
        for (o, a) in open_for.iter_mut().zip(allowed) {
            *o = a[f];
        }
        if !open_for.iter().any(|&a| a) {
            continue;
        }
        let every = open_for.iter().all(|&a| a);
        acc.iter_mut().for_each(|a| *a = (T::zero(), T::zero(), T::zero(), false));
        for &(r, v) in &sorted.order[f] {
            let r = r as usize;
            let n = node_of[r];
            if n == INACTIVE {
                continue;
            }
            let n = n as usize;
            if !every && !open_for[n] {
                continue;
            }
            let (gl, hl, prev, seen) = acc[n];
            if seen && v > prev {
                let (g, h) = totals[n];
                if hl >= params.min_child_weight && h - hl >= params.min_child_weight {
                    let gain = split_gain(gl, hl, g, h, params);
                    if gain > T::zero() && best[n].is_none_or(|b| gain > b.gain) {
                        best[n] = Some(Split { feature: f, threshold: midpoint(prev, v), gain });
                    }
                }
            }
            acc[n] = (gl + grad[r], hl + hess[r], v, true);
        }
    }
    best
}

enum Proto<T> {
    Open { g: T, h: T },
    Split { split: Split<T>, left: usize, right: usize, h: T },
    Leaf { value: T, cover: T },
}

/// Grows one tree on the rows with `active[r]`; `grad`/`hess` are per row of `x`.
pub(crate) fn grow_tree<T: Real, R: Rng + ?Sized>(
    x: &Matrix<T>,
    sorted: &SortedColumns<T>,
    active: &[bool],
    grad: &[T],
    hess: &[T],
    params: &TreeParams<T>,
    rng: &mut R,
) -> Result<Tree<T>> {
    let p = x.cols();
    let mut node_of: Vec<u32> = active.iter().map(|&a| if a { 0 } else { INACTIVE }).collect();
    let (mut g0, mut h0) = (T::zero(), T::zero());
    let mut any = false;
    for r in 0..x.rows() {
        if active[r] {
            any = true;
            g0 += grad[r];
            h0 += hess[r];
        }
    }
    if !any {
        return Err(Error::Empty("no training rows for tree".into()));
    }
    let tree_features: Option<Vec<bool>> = match params.sampling {
        FeatureSampling::PerTree(frac) if p > 0 => {
            let mut mask = vec![false; p];
            for f in draw_features(rng, p, per_tree_count(frac, p)) {
                mask[f] = true;
            }
            Some(mask)
        }
        _ => None,
    };

    let mut protos: Vec<Proto<T>> = vec![Proto::Open { g: g0, h: h0 }];
    // Frontier entries are proto ids; node_of stores the frontier position.
    let mut frontier: Vec<usize> = vec![0];
    let mut depth = 0;
    while !frontier.is_empty() {
        let totals: Vec<(T, T)> = frontier
            .iter()
            .map(|&id| match protos[id] {
                Proto::Open { g, h } => (g, h),
                _ => unreachable!("frontier holds open nodes"),
            })
            .collect();
        let splits = if depth < params.max_depth && p > 0 {
            let allowed: Vec<Vec<bool>> = frontier
                .iter()
                .map(|_| match (&params.sampling, &tree_features) {
                    (FeatureSampling::PerSplit(k), _) => {
                        let mut mask = vec![false; p];
                        for f in draw_features(rng, p, *k) {
                            mask[f] = true;
                        }
                        mask
                    }
                    (_, Some(mask)) => mask.clone(),
                    _ => vec![true; p],
                })
                .collect();
            scan_frontier(x, sorted, &node_of, grad, hess, &totals, &allowed, params)
        } else {
            vec![None; frontier.len()]
        };

        let mut next_frontier = Vec::new();
        // Frontier position -> (left position, right position) in the next frontier.
        let mut routes: Vec<Option<(u32, u32, Split<T>)>> = vec![None; frontier.len()];
        let mut child_sums: Vec<(T, T)> = Vec::new();
        for (pos, &id) in frontier.iter().enumerate() {
            let (g, h) = totals[pos];
            match splits[pos] {
                Some(split) => {
                    let lp = next_frontier.len();
                    let left = protos.len();
                    protos.push(Proto::Open { g: T::zero(), h: T::zero() });
                    let right = protos.len();
                    protos.push(Proto::Open { g: T::zero(), h: T::zero() });
                    next_frontier.push(left);
                    next_frontier.push(right);
                    child_sums.push((T::zero(), T::zero()));
                    child_sums.push((T::zero(), T::zero()));
                    protos[id] = Proto::Split { split, left, right, h };
                    routes[pos] = Some((lp as u32, lp as u32 + 1, split));
                }
                None => {
                    let mut value = -g / (h + params.lambda);
                    if value == T::zero() {
                        value = T::zero();
                    }
                    protos[id] = Proto::Leaf { value, cover: h };
                }
            }
        }
        for r in 0..x.rows() {
            let n = node_of[r];
            if n == INACTIVE {
                continue;
            }
            node_of[r] = match routes[n as usize] {
                Some((l, rr, split)) => {
                    let c = if x.get(r, split.feature) < split.threshold { l } else { rr };
                    child_sums[c as usize].0 += grad[r];
                    child_sums[c as usize].1 += hess[r];
                    c
                }
                None => INACTIVE,
            };
        }
        for (pos, &id) in next_frontier.iter().enumerate() {
            let (g, h) = child_sums[pos];
            protos[id] = Proto::Open { g, h };
        }
        frontier = next_frontier;
        depth += 1;
    }

    // Re-emit in pre-order.
    let mut nodes = Vec::with_capacity(protos.len());
    fn emit<T: Real>(protos: &[Proto<T>], id: usize, out: &mut Vec<TreeNode<T>>) -> usize {
        let at = out.len();
        match &protos[id] {
            Proto::Leaf { value, cover } => out.push(TreeNode::Leaf { value: *value, cover: *cover }),
            Proto::Split { split, left, right, h } => {
                out.push(TreeNode::Internal { feature: split.feature, threshold: split.threshold, left: 0, right: 0, cover: *h });
                let l = emit(protos, *left, out);
                let r = emit(protos, *right, out);
                if let TreeNode::Internal { left, right, .. } = &mut out[at] {
                    *left = l;
                    *right = r;
                }
            }
            Proto::Open { .. } => unreachable!("all nodes closed"),
        }
        at
    }
    emit(&protos, 0, &mut nodes);
    Ok(Tree { nodes })
}

fn check_inputs<T: Real>(x: &Matrix<T>, grad: &[T], hess: &[T]) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::Empty("empty training set".into()));
    }
    if grad.len() != x.rows() || hess.len() != x.rows() {
        return Err(Error::Input("gradient/hessian length differs from row count".into()));
    }
    if hess.iter().any(|h| !(*h > T::zero())) {
        return Err(Error::Input("hessians must be > 0".into()));
    }
    Ok(())
}

/// Fits one tree on all rows of `x`.
pub fn fit_tree<T: Real, R: Rng + ?Sized>(
    x: &Matrix<T>,
    gradients: &[T],
    hessians: &[T],
    params: &TreeParams<T>,
    rng: &mut R,
) -> Result<Tree<T>> {
    check_inputs(x, gradients, hessians)?;
    let sorted = SortedColumns::new(x);
    grow_tree(x, &sorted, &vec![true; x.rows()], gradients, hessians, params, rng)
}

/// Best root split over all features (no sampling), as the tree learner sees it.
pub fn root_split<T: Real>(x: &Matrix<T>, gradients: &[T], hessians: &[T], params: &TreeParams<T>) -> Result<Option<Split<T>>> {
    check_inputs(x, gradients, hessians)?;
    let sorted = SortedColumns::new(x);
    let node_of = vec![0u32; x.rows()];
    let totals = [(gradients.iter().copied().sum(), hessians.iter().copied().sum())];
    let allowed = [vec![true; x.cols()]];
    Ok(scan_frontier(x, &sorted, &node_of, gradients, hessians, &totals, &allowed, params)[0])
}
