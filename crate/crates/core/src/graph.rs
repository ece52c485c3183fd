//! Street graph construction and ego-graph centralities.
//!
//! Segments snap into nodes by endpoint proximity (union-find over a bucket
//! index). Centralities are computed inside radius-bounded ego subgraphs:
//! the origin is a node for node-level metrics, or the midpoint of a
//! segment (the segment split in two halves) for segment-level metrics.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{GridIndex, Point, Rect};
use crate::real::Real;
use crate::schema::RoadSegment;

pub const DEFAULT_SNAP_TOLERANCE_M: f64 = 0.5;
pub const DEFAULT_RADIUS_M: f64 = 800.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge<T> {
    pub u: usize,
    pub v: usize,
    pub weight_m: T,
    /// Index of the source segment.
    pub segment: usize,
}

/// Undirected weighted street graph. Parallel edges are kept in `edges` but
/// only the shortest one per node pair enters `adjacency`; self-loops never do.
#[derive(Debug, Clone)]
pub struct StreetGraph<T> {
    pub nodes: Vec<Point<T>>,
    pub edges: Vec<Edge<T>>,
    pub adjacency: Vec<Vec<(usize, usize)>>,
    pub segment_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphWarning {
    /// A connected component other than the largest.
    MinorComponent { nodes: usize, segments: Vec<String> },
    /// Snapping collapsed both ends of a non-loop segment onto one node.
    CollapsedSegment { segment_id: String },
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Snaps segment endpoints within `snap_tolerance_m` into shared nodes.
pub fn build_graph<T: Real>(
    segments: &[RoadSegment<T>],
    snap_tolerance_m: T,
) -> Result<(StreetGraph<T>, Vec<GraphWarning>)> {
    if !(snap_tolerance_m >= T::zero()) {
        return Err(Error::Config("snap tolerance must be >= 0".into()));
    }
    let mut seen = HashSet::new();
    for s in segments {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::Input(format!("duplicate segment id `{}`", s.id)));
        }
    }

    let endpoints: Vec<Point<T>> = segments.iter().flat_map(|s| [s.start(), s.end()]).collect();
    let mut uf = UnionFind::new(endpoints.len());
    let cell = if snap_tolerance_m > T::zero() { snap_tolerance_m } else { T::one() };
    let mut index = GridIndex::new(cell);
    for (i, p) in endpoints.iter().enumerate() {
        index.insert(i, &Rect { min_x: p.x, min_y: p.y, max_x: p.x, max_y: p.y });
    }
    for (i, p) in endpoints.iter().enumerate() {
        for j in index.query(&Rect::square(*p, snap_tolerance_m * T::lit(2.0))) {
            if j > i && p.dist(endpoints[j]) <= snap_tolerance_m {
                uf.union(i, j);
            }
        }
    }

    // Node ids follow first appearance of each cluster root; coordinates are cluster means.
    let mut root_to_node = HashMap::new();
    let mut sums: Vec<(T, T, usize)> = Vec::new();
    let mut endpoint_node = vec![0usize; endpoints.len()];
    for i in 0..endpoints.len() {
        let r = uf.find(i);
        let n = *root_to_node.entry(r).or_insert_with(|| {
            sums.push((T::zero(), T::zero(), 0));
            sums.len() - 1
        });
        sums[n].0 += endpoints[i].x;
        sums[n].1 += endpoints[i].y;
        sums[n].2 += 1;
        endpoint_node[i] = n;
    }
    let nodes: Vec<Point<T>> =
        sums.iter().map(|&(x, y, c)| Point::new(x / T::count(c), y / T::count(c))).collect();

    let mut warnings = Vec::new();
    let mut edges = Vec::with_capacity(segments.len());
    for (k, s) in segments.iter().enumerate() {
        let (u, v) = (endpoint_node[2 * k], endpoint_node[2 * k + 1]);
        if u == v && !s.is_loop() {
            warnings.push(GraphWarning::CollapsedSegment { segment_id: s.id.clone() });
        }
        edges.push(Edge { u, v, weight_m: s.length_m, segment: k });
    }

    let mut best: HashMap<(usize, usize), usize> = HashMap::new();
    for (e, edge) in edges.iter().enumerate() {
        if edge.u == edge.v {
            continue;
        }
        let key = (edge.u.min(edge.v), edge.u.max(edge.v));
        match best.get(&key) {
            Some(&cur) if edges[cur].weight_m <= edge.weight_m => {}
            _ => {
                best.insert(key, e);
            }
        }
    }
    let mut kept: Vec<usize> = best.into_values().collect();
    kept.sort_unstable();
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for e in kept {
        let Edge { u, v, .. } = edges[e];
        adjacency[u].push((v, e));
        adjacency[v].push((u, e));
    }

    let graph = StreetGraph { nodes, edges, adjacency, segment_ids: segments.iter().map(|s| s.id.clone()).collect() };
    let comps = graph.components();
    if comps.len() > 1 {
        let largest = comps.iter().enumerate().max_by_key(|(i, c)| (c.len(), std::cmp::Reverse(*i))).map(|(i, _)| i);
        for (i, comp) in comps.iter().enumerate() {
            if Some(i) == largest {
                continue;
            }
            let members: HashSet<usize> = comp.iter().copied().collect();
            let segs = graph
                .edges
                .iter()
                .filter(|e| members.contains(&e.u))
                .map(|e| graph.segment_ids[e.segment].clone())
                .collect();
            warnings.push(GraphWarning::MinorComponent { nodes: comp.len(), segments: segs });
        }
    }
    for w in &warnings {
        log::warn!("{w:?}");
    }
    Ok((graph, warnings))
}

#[derive(Clone, Copy)]
struct HeapItem<T> {
    dist: T,
    node: usize,
}

impl<T: Real> PartialEq for HeapItem<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for HeapItem<T> {}
impl<T: Real> PartialOrd for HeapItem<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for HeapItem<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Radius-bounded Dijkstra over an adjacency closure; `seeds` are initial
/// (node, distance) pairs. Returns settled distances (None = beyond radius).
fn bounded_dijkstra<T: Real, F>(n: usize, seeds: &[(usize, T)], radius: T, mut neighbors: F) -> Vec<Option<T>>
where
    F: FnMut(usize, &mut dyn FnMut(usize, T)),
{
    let mut dist: Vec<Option<T>> = vec![None; n];
    let mut best = vec![T::infinity(); n];
    let mut heap = BinaryHeap::new();
    for &(s, d) in seeds {
        if d <= radius && d < best[s] {
            best[s] = d;
            heap.push(HeapItem { dist: d, node: s });
        }
    }
    while let Some(HeapItem { dist: d, node }) = heap.pop() {
        if dist[node].is_some() || d > best[node] {
            continue;
        }
        dist[node] = Some(d);
        neighbors(node, &mut |nb, w| {
            let nd = d + w;
            if nd <= radius && nd < best[nb] && dist[nb].is_none() {
                best[nb] = nd;
                heap.push(HeapItem { dist: nd, node: nb });
            }
        });
    }
    dist
}

fn reached<T: Real>(dist: &[Option<T>]) -> Vec<usize> {
    (0..dist.len()).filter(|&n| dist[n].is_some()).collect()
}

/// Induced ego subgraph with local indices; `global[i]` maps back, origin is local 0.
#[derive(Debug, Clone)]
pub struct EgoGraph<T> {
    pub global: Vec<usize>,
    pub origin_distance: Vec<T>,
    pub adjacency: Vec<Vec<(usize, T)>>,
}

impl<T: Real> EgoGraph<T> {
    pub fn len(&self) -> usize {
        self.global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global.is_empty()
    }
}

impl<T: Real> StreetGraph<T> {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Connected components over the adjacency, each sorted, ordered by smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.nodes.len()];
        let mut out = Vec::new();
        for start in 0..self.nodes.len() {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut stack = vec![start];
            let mut members = Vec::new();
            comp[start] = id;
            while let Some(n) = stack.pop() {
                members.push(n);
                for &(nb, _) in &self.adjacency[n] {
                    if comp[nb] == usize::MAX {
                        comp[nb] = id;
                        stack.push(nb);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    pub fn segment_index(&self, id: &str) -> Option<usize> {
        self.segment_ids.iter().position(|s| s == id)
    }

    /// Segments sharing at least one endpoint node, per segment (sorted).
    pub fn segment_adjacency(&self) -> Vec<Vec<usize>> {
        let mut at_node: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            at_node[e.u].push(e.segment);
            if e.v != e.u {
                at_node[e.v].push(e.segment);
            }
        }
        let mut out = vec![Vec::new(); self.segment_ids.len()];
        for e in &self.edges {
            let mut nb: Vec<usize> = at_node[e.u]
                .iter()
                .chain(&at_node[e.v])
                .copied()
                .filter(|&s| s != e.segment)
                .collect();
            nb.sort_unstable();
            nb.dedup();
            out[e.segment] = nb;
        }
        out
    }

    fn edge_by_segment(&self, segment: usize) -> &Edge<T> {
        self.edges.iter().find(|e| e.segment == segment).expect("every segment has an edge")
    }

}

/// Ego subgraph of all nodes within `radius_m` network distance of `origin`.
pub fn ego_subgraph<T: Real>(graph: &StreetGraph<T>, origin: usize, radius_m: T) -> Result<EgoGraph<T>> {
    if origin >= graph.node_count() {
        return Err(Error::Lookup { kind: "node", id: origin.to_string() });
    }
    if !(radius_m > T::zero()) {
        return Err(Error::Config("radius must be > 0".into()));
    }
    let dist = bounded_dijkstra(graph.node_count(), &[(origin, T::zero())], radius_m, |n, visit| {
        for &(nb, e) in &graph.adjacency[n] {
            visit(nb, graph.edges[e].weight_m);
        }
    });
    let mut global = reached(&dist);
    // Origin first.
    global.retain(|&g| g != origin);
    global.insert(0, origin);
    let mut local = vec![usize::MAX; graph.node_count()];
    for (i, &g) in global.iter().enumerate() {
        local[g] = i;
    }
    let adjacency = global
        .iter()
        .map(|&g| {
            graph.adjacency[g]
                .iter()
                .filter(|(nb, _)| local[*nb] != usize::MAX)
                .map(|&(nb, e)| (local[nb], graph.edges[e].weight_m))
                .collect()
        })
        .collect();
    let origin_distance = global.iter().map(|&g| dist[g].expect("included")).collect();
    Ok(EgoGraph { global, origin_distance, adjacency })
}

/// Centralities of one origin inside its ego subgraph.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Centrality<T> {
    pub degree: T,
    pub closeness: T,
    pub betweenness: T,
    /// Mean shortest-path distance (m) from the origin to other ego nodes.
    pub depth: T,
}

/// Brandes-style betweenness of local node 0 plus distance metrics.
fn origin_metrics<T: Real>(ego: &EgoGraph<T>) -> Centrality<T> {
    let n = ego.len();
    let others = n.saturating_sub(1);
    let total: T = ego.origin_distance.iter().skip(1).copied().sum();
    let closeness = if others == 0 || total <= T::zero() { T::zero() } else { T::one() / total };
    let depth = if others == 0 { T::zero() } else { total / T::count(others) };

    let mut pair_sum = T::zero();
    let mut dist = vec![T::infinity(); n];
    let mut sigma = vec![T::zero(); n];
    let mut delta = vec![T::zero(); n];
    let mut settled = vec![false; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    for s in 1..n {
        dist.iter_mut().for_each(|d| *d = T::infinity());
        sigma.iter_mut().for_each(|v| *v = T::zero());
        delta.iter_mut().for_each(|v| *v = T::zero());
        settled.iter_mut().for_each(|v| *v = false);
        preds.iter_mut().for_each(Vec::clear);
        order.clear();
        dist[s] = T::zero();
        sigma[s] = T::one();
        let mut heap = BinaryHeap::new();
        heap.push(HeapItem { dist: T::zero(), node: s });
        while let Some(HeapItem { dist: d, node: v }) = heap.pop() {
            if settled[v] || d > dist[v] {
                continue;
            }
            settled[v] = true;
            order.push(v);
            for &(w, wt) in &ego.adjacency[v] {
                let nd = d + wt;
                if nd < dist[w] {
                    dist[w] = nd;
                    sigma[w] = sigma[v];
                    preds[w].clear();
                    preds[w].push(v);
                    heap.push(HeapItem { dist: nd, node: w });
                } else if nd == dist[w] && !settled[w] {
                    let sv = sigma[v];
                    sigma[w] += sv;
                    preds[w].push(v);
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                let c = sigma[v] / sigma[w] * (T::one() + delta[w]);
                delta[v] += c;
            }
        }
        pair_sum += delta[0];
    }
    Centrality {
        degree: T::count(ego.adjacency.first().map_or(0, Vec::len)),
        closeness,
        // Each unordered pair was counted from both endpoints.
        betweenness: pair_sum / T::lit(2.0),
        depth,
    }
}

/// Node-level centralities within `radius_m` ego subgraphs, indexed by node.
pub fn node_centrality<T: Real>(graph: &StreetGraph<T>, radius_m: T) -> Result<Vec<Centrality<T>>> {
    (0..graph.node_count())
        .into_par_iter()
        .map(|n| ego_subgraph(graph, n, radius_m).map(|ego| origin_metrics(&ego)))
        .collect()
}

/// Ego subgraph around the midpoint of `segment`: the segment's edge is split
/// into two halves meeting at a virtual origin node (local 0).
pub fn segment_ego<T: Real>(graph: &StreetGraph<T>, segment: usize, radius_m: T) -> Result<EgoGraph<T>> {
    if segment >= graph.segment_ids.len() {
        return Err(Error::Lookup { kind: "segment", id: segment.to_string() });
    }
    let edge = graph.edge_by_segment(segment);
    let half = edge.weight_m / T::lit(2.0);
    let split_edge = graph.edges.iter().position(|e| e.segment == segment);
    let skip = |e: usize| Some(e) == split_edge;
    let dist = bounded_dijkstra(graph.node_count(), &[(edge.u, half), (edge.v, half)], radius_m, |n, visit| {
        for &(nb, e) in &graph.adjacency[n] {
            if !skip(e) {
                visit(nb, graph.edges[e].weight_m);
            }
        }
    });
    let members = reached(&dist);
    let mut global = vec![usize::MAX];
    global.extend(members.iter().copied());
    let mut local = vec![usize::MAX; graph.node_count()];
    for (i, &g) in global.iter().enumerate().skip(1) {
        local[g] = i;
    }
    let mut adjacency: Vec<Vec<(usize, T)>> = vec![Vec::new(); global.len()];
    for (i, &g) in global.iter().enumerate().skip(1) {
        for &(nb, e) in &graph.adjacency[g] {
            if !skip(e) && local[nb] != usize::MAX {
                adjacency[i].push((local[nb], graph.edges[e].weight_m));
            }
        }
    }
    let mut ends = vec![edge.u];
    if edge.v != edge.u {
        ends.push(edge.v);
    }
    for end in ends {
        if local[end] != usize::MAX {
            adjacency[0].push((local[end], half));
            adjacency[local[end]].push((0, half));
        }
    }
    let mut origin_distance = vec![T::zero()];
    origin_distance.extend(members.iter().map(|&g| dist[g].expect("included")));
    Ok(EgoGraph { global, origin_distance, adjacency })
}

/// Per-segment centralities at each segment's midpoint.
///
/// Closeness, betweenness and depth come from the midpoint ego subgraph;
/// degree is the number of other segments sharing an endpoint with the segment.
pub fn segment_centrality<T: Real>(graph: &StreetGraph<T>, radius_m: T) -> Result<Vec<Centrality<T>>> {
    if !(radius_m > T::zero()) {
        return Err(Error::Config("radius must be > 0".into()));
    }
    let line_degree: Vec<usize> = graph.segment_adjacency().iter().map(Vec::len).collect();
    (0..graph.segment_ids.len())
        .into_par_iter()
        .map(|s| {
            let ego = segment_ego(graph, s, radius_m)?;
            let mut m = origin_metrics(&ego);
            m.degree = T::count(line_degree[s]);
            Ok(m)
        })
        .collect()
}

/// Node metrics for an arbitrary ego graph (origin = local 0).
pub fn ego_metrics<T: Real>(ego: &EgoGraph<T>) -> Centrality<T> {
    origin_metrics(ego)
}
