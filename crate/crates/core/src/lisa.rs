//! Bivariate local Moran statistics on a lattice and mismatch-zone extraction.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::{self, Real};
use crate::rng::stream;
use crate::schema::GridCell;
use crate::typology::Typology;

pub const DEFAULT_PERMUTATIONS: usize = 999;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Contiguity {
    #[default]
    Queen,
    Rook,
}

impl Contiguity {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "queen" => Ok(Contiguity::Queen),
            "rook" => Ok(Contiguity::Rook),
            other => Err(Error::Config(format!("unknown contiguity '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Contiguity::Queen => "queen",
            Contiguity::Rook => "rook",
        }
    }
}

/// Row-standardized lattice weights over a list of (row, col) cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights<T> {
    pub cells: Vec<(usize, usize)>,
    pub neighbors: Vec<Vec<(usize, T)>>,
}

impl<T: Real> SpatialWeights<T> {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn isolated(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.neighbors[i].is_empty()).collect()
    }

    pub fn link_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Σⱼ wᵢⱼ vⱼ for every cell.
    pub fn lag(&self, v: &[T]) -> Vec<T> {
        self.neighbors.iter().map(|nb| nb.iter().map(|&(j, w)| w * v[j]).sum()).collect()
    }
}

pub fn build_weights<T: Real>(cells: &[(usize, usize)], scheme: Contiguity) -> Result<SpatialWeights<T>> {
    if cells.is_empty() {
        return Err(Error::Empty("no grid cells for spatial weights".into()));
    }
    let index: HashMap<(usize, usize), usize> = cells.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    if index.len() != cells.len() {
        return Err(Error::Input("duplicate lattice cell".into()));
    }
    let neighbors = cells
        .iter()
        .map(|&(r, c)| {
            let mut nb = Vec::new();
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if (dr, dc) == (0, 0) || (scheme == Contiguity::Rook && dr != 0 && dc != 0) {
                        continue;
                    }
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 {
                        continue;
                    }
                    if let Some(&j) = index.get(&(nr as usize, nc as usize)) {
                        nb.push(j);
                    }
                }
            }
            nb.sort_unstable();
            let w = if nb.is_empty() { T::zero() } else { T::one() / T::count(nb.len()) };
            nb.into_iter().map(|j| (j, w)).collect()
        })
        .collect();
    Ok(SpatialWeights { cells: cells.to_vec(), neighbors })
}

/// Weights over the cells of an aggregated grid that carry supply.
pub fn grid_weights<T: Real>(cells: &[GridCell<T>], scheme: Contiguity) -> Result<(SpatialWeights<T>, Vec<usize>)> {
    let kept: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].has_supply).collect();
    let coords: Vec<(usize, usize)> = kept.iter().map(|&i| (cells[i].row, cells[i].col)).collect();
    Ok((build_weights(&coords, scheme)?, kept))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cluster {
    HH,
    HL,
    LH,
    LL,
    NS,
}

impl Cluster {
    pub const ALL: [Cluster; 5] = [Cluster::HH, Cluster::HL, Cluster::LH, Cluster::LL, Cluster::NS];

    pub fn as_str(self) -> &'static str {
        match self {
            Cluster::HH => "HH",
            Cluster::HL => "HL",
            Cluster::LH => "LH",
            Cluster::LL => "LL",
            Cluster::NS => "NS",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown cluster label '{s}'")))
    }

    fn quadrant<T: Real>(zx: T, lag: T) -> Self {
        let zero = T::zero();
        if zx > zero && lag > zero {
            Cluster::HH
        } else if zx > zero && lag < zero {
            Cluster::HL
        } else if zx < zero && lag > zero {
            Cluster::LH
        } else if zx < zero && lag < zero {
            Cluster::LL
        } else {
            Cluster::NS
        }
    }
}

impl fmt::Display for Cluster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LisaParams<T> {
    pub permutations: usize,
    pub alpha: T,
    pub seed: u64,
}

impl<T: Real> Default for LisaParams<T> {
    fn default() -> Self {
        Self { permutations: DEFAULT_PERMUTATIONS, alpha: T::lit(DEFAULT_ALPHA), seed: 42 }
    }
}

/// Local statistics of x against the spatial lag of y, in the cell order of the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LisaResult<T> {
    pub z_x: Vec<T>,
    pub z_y: Vec<T>,
    pub lag_y: Vec<T>,
    pub local_i: Vec<T>,
    pub pseudo_p: Vec<T>,
    pub clusters: Vec<Cluster>,
    pub params: LisaParams<T>,
}

impl<T: Real> LisaResult<T> {
    pub fn global_i(&self) -> T {
        real::mean(&self.local_i).unwrap_or_else(T::zero)
    }

    pub fn cells_in(&self, c: Cluster) -> Vec<usize> {
        (0..self.clusters.len()).filter(|&i| self.clusters[i] == c).collect()
    }
}

/// Population-moment z-scores; a constant vector maps to zeros.
pub fn zscore<T: Real>(v: &[T]) -> (Vec<T>, bool) {
    let mu = real::mean(v).unwrap_or_else(T::zero);
    let sd = real::population_std(v, mu);
    if !(sd > T::zero()) {
        return (vec![T::zero(); v.len()], true);
    }
    (v.iter().map(|&a| (a - mu) / sd).collect(), false)
}

/// Global bivariate Moran's I: zₓᵀ W z_y / n.
pub fn global_bivariate_moran<T: Real>(x: &[T], y: &[T], w: &SpatialWeights<T>) -> T {
    let (zx, _) = zscore(x);
    let (zy, _) = zscore(y);
    let lag = w.lag(&zy);
    zx.iter().zip(&lag).map(|(a, b)| *a * *b).sum::<T>() / T::count(x.len().max(1))
}

fn cell_unit((r, c): (usize, usize)) -> u64 {
    ((r as u64) << 32) | c as u64
}

pub fn bivariate_lisa<T: Real>(x: &[T], y: &[T], w: &SpatialWeights<T>, params: &LisaParams<T>) -> Result<LisaResult<T>> {
    let n = w.len();
    if x.len() != n || y.len() != n {
        return Err(Error::Input(format!("LISA needs {n} values per variable")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Input("LISA inputs must be finite".into()));
    }
    if params.permutations < 99 {
        return Err(Error::Config(format!("at least 99 permutations required, got {}", params.permutations)));
    }
    let (z_x, cx) = zscore(x);
    let (z_y, cy) = zscore(y);
    if cx || cy {
        log::warn!("constant LISA input; all local statistics are zero");
    }
    let lag_y = w.lag(&z_y);
    let local_i: Vec<T> = z_x.iter().zip(&lag_y).map(|(a, b)| *a * *b).collect();

    // The other-cell pool is indexed in lattice order so that results do not
    // depend on the order cells were supplied in.
    let mut canon: Vec<usize> = (0..n).collect();
    canon.sort_by_key(|&i| w.cells[i]);
    let pool: Vec<T> = canon.iter().map(|&i| z_y[i]).collect();
    let mut rank = vec![0; n];
    for (k, &i) in canon.iter().enumerate() {
        rank[i] = k;
    }

    let perms = params.permutations;
    let pseudo_p: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| {
            let nb = &w.neighbors[i];
            if nb.is_empty() || n < 2 || nb.len() > n - 1 {
                return T::one();
            }
            let mut rng = stream(params.seed, "lisa", cell_unit(w.cells[i]));
            let observed = local_i[i].abs();
            let skip = rank[i];
            let mut extreme = 0usize;
            for _ in 0..perms {
                let draw = sample(&mut rng, n - 1, nb.len());
                let mut lag = T::zero();
                for (k, &(_, wij)) in draw.iter().zip(nb) {
                    let j = if k >= skip { k + 1 } else { k };
                    lag += wij * pool[j];
                }
                if (z_x[i] * lag).abs() >= observed {
                    extreme += 1;
                }
            }
            T::count(extreme + 1) / T::count(perms + 1)
        })
        .collect();
    let clusters = (0..n)
        .map(|i| if pseudo_p[i] <= params.alpha && local_i[i] != T::zero() { Cluster::quadrant(z_x[i], lag_y[i]) } else { Cluster::NS })
        .collect();
    Ok(LisaResult { z_x, z_y, lag_y, local_i, pseudo_p, clusters, params: *params })
}

/// A connected group of target-quadrant cells and the segments touching it.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchZone {
    pub cells: Vec<usize>,
    pub segments: Vec<usize>,
    pub label_counts: BTreeMap<Typology, usize>,
}

impl MismatchZone {
    pub fn label_share(&self, t: Typology) -> f64 {
        let total: usize = self.label_counts.values().sum();
        if total == 0 {
            0.0
        } else {
            self.label_counts.get(&t).copied().unwrap_or(0) as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MismatchReport {
    pub target: Cluster,
    pub zones: Vec<MismatchZone>,
    /// Segment counts by (cluster of an intersected cell, segment label).
    pub crosstab: BTreeMap<(Cluster, Typology), usize>,
}

impl MismatchReport {
    pub fn target_segments(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.zones.iter().flat_map(|z| z.segments.iter().copied()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// `segment_cells[s]` lists the weight-cell positions segment `s` intersects.
pub fn mismatch_zones<T: Real>(
    lisa: &LisaResult<T>,
    w: &SpatialWeights<T>,
    labels: &[Typology],
    segment_cells: &[Vec<usize>],
    target: Cluster,
) -> Result<MismatchReport> {
    if labels.len() != segment_cells.len() {
        return Err(Error::Input("one typology label per segment required".into()));
    }
    if segment_cells.iter().flatten().any(|&c| c >= lisa.clusters.len()) {
        return Err(Error::Input("segment mapped to a cell outside the LISA result".into()));
    }
    let mut cell_segments: Vec<Vec<usize>> = vec![Vec::new(); lisa.clusters.len()];
    for (s, cells) in segment_cells.iter().enumerate() {
        for &c in cells {
            cell_segments[c].push(s);
        }
    }
    let mut crosstab = BTreeMap::new();
    for (s, cells) in segment_cells.iter().enumerate() {
        let mut seen: Vec<Cluster> = cells.iter().map(|&c| lisa.clusters[c]).collect();
        seen.sort();
        seen.dedup();
        for c in seen {
            *crosstab.entry((c, labels[s])).or_insert(0) += 1;
        }
    }
    // Zones are connected components of target cells under the same contiguity.
    let mut zone_of = vec![usize::MAX; lisa.clusters.len()];
    let mut zones = Vec::new();
    for start in 0..lisa.clusters.len() {
        if lisa.clusters[start] != target || zone_of[start] != usize::MAX {
            continue;
        }
        let id = zones.len();
        let mut stack = vec![start];
        zone_of[start] = id;
        let mut cells = Vec::new();
        while let Some(c) = stack.pop() {
            cells.push(c);
            for &(j, _) in &w.neighbors[c] {
                if lisa.clusters[j] == target && zone_of[j] == usize::MAX {
                    zone_of[j] = id;
                    stack.push(j);
                }
            }
        }
        cells.sort_unstable();
        let mut segments: Vec<usize> = cells.iter().flat_map(|&c| cell_segments[c].iter().copied()).collect();
        segments.sort_unstable();
        segments.dedup();
        let mut label_counts = BTreeMap::new();
        for &s in &segments {
            *label_counts.entry(labels[s]).or_insert(0) += 1;
        }
        zones.push(MismatchZone { cells, segments, label_counts });
    }
    Ok(MismatchReport { target, zones, crosstab })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(n: usize) -> Vec<(usize, usize)> {
        (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).collect()
    }

    #[test]
    fn queen_and_rook_counts() {
        let w: SpatialWeights<f64> = build_weights(&lattice(3), Contiguity::Queen).unwrap();
        assert_eq!(w.neighbors[4].len(), 8);
        assert!(w.neighbors[4].iter().all(|&(_, v)| v == 0.125));
        assert_eq!(w.neighbors[0].len(), 3);
        assert!(w.neighbors[0].iter().all(|&(_, v)| v == 1.0 / 3.0));
        let r: SpatialWeights<f64> = build_weights(&lattice(3), Contiguity::Rook).unwrap();
        assert_eq!(r.link_count(), 24);
        assert!(build_weights::<f64>(&[], Contiguity::Queen).is_err());
    }

    #[test]
    fn constant_supply_gives_zero() {
        let w: SpatialWeights<f64> = build_weights(&lattice(4), Contiguity::Queen).unwrap();
        let x: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let r = bivariate_lisa(&x, &[3.0; 16], &w, &LisaParams::default()).unwrap();
        assert!(r.local_i.iter().all(|v| *v == 0.0));
        assert!(r.clusters.iter().all(|c| *c == Cluster::NS));
    }

    #[test]
    fn single_hl_cell_crosstab() {
        let w: SpatialWeights<f64> = build_weights(&lattice(2), Contiguity::Queen).unwrap();
        let lisa = LisaResult {
            z_x: vec![0.0; 4],
            z_y: vec![0.0; 4],
            lag_y: vec![0.0; 4],
            local_i: vec![0.0; 4],
            pseudo_p: vec![1.0; 4],
            clusters: vec![Cluster::HL, Cluster::NS, Cluster::NS, Cluster::NS],
            params: LisaParams::default(),
        };
        let rep = mismatch_zones(&lisa, &w, &[Typology::CPL, Typology::CPL, Typology::None], &[vec![0], vec![0, 1], vec![3]], Cluster::HL).unwrap();
        assert_eq!(rep.zones.len(), 1);
        assert_eq!(rep.zones[0].label_share(Typology::CPL), 1.0);
        let none = mismatch_zones(&lisa, &w, &[Typology::None], &[vec![3]], Cluster::LL).unwrap();
        assert!(none.zones.is_empty());
    }
}
