use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{clipped_polyline_length, Point, Rect};
use crate::real::Real;
use crate::schema::{FeatureTable, GridCell, RoadSegment};

/// Population raster cell; `(x, y)` is the cell center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationCell<T> {
    pub x: T,
    pub y: T,
    pub cell_size_m: T,
    pub population: T,
}

impl<T: Real> PopulationCell<T> {
    pub fn rect(&self) -> Rect<T> {
        Rect::square(Point::new(self.x, self.y), self.cell_size_m)
    }
}

/// Regular harmonization lattice with the segment-to-cell overlap table.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub origin_x: T,
    pub origin_y: T,
    pub cell_size_m: T,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major, `row * n_cols + col`.
    pub cells: Vec<GridCell<T>>,
    /// Per segment: (cell index, clipped length in meters).
    pub segment_cells: Vec<Vec<(usize, T)>>,
}

impl<T: Real> Grid<T> {
    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.n_cols + col
    }

    /// Length-weighted mean of per-segment `values`; `None` for cells without segments.
    pub fn length_weighted(&self, values: &[T]) -> Vec<Option<T>> {
        self.length_weighted_masked(values, None)
    }

    fn length_weighted_masked(&self, values: &[T], missing: Option<&[bool]>) -> Vec<Option<T>> {
        let mut num = vec![T::zero(); self.cells.len()];
        let mut den = vec![T::zero(); self.cells.len()];
        for (s, parts) in self.segment_cells.iter().enumerate() {
            if missing.is_some_and(|m| m[s]) {
                continue;
            }
            for &(c, len) in parts {
                num[c] += values[s] * len;
                den[c] += len;
            }
        }
        num.into_iter().zip(den).map(|(n, d)| (d > T::zero()).then(|| n / d)).collect()
    }

    /// Cells (row-major indices) touched by each segment.
    pub fn cells_of_segment(&self, segment: usize) -> impl Iterator<Item = usize> + '_ {
        self.segment_cells[segment].iter().map(|&(c, _)| c)
    }
}

fn span<T: Real>(lo: T, hi: T, origin: T, size: T, n: usize) -> (usize, usize) {
    let a = ((lo - origin) / size).floor().to_i64().unwrap_or(0).max(0) as usize;
    let b = ((hi - origin) / size).floor().to_i64().unwrap_or(0).max(0) as usize;
    (a.min(n - 1), b.min(n - 1))
}

/// Aggregates segment features into a `cell_size_m` lattice covering all
/// segments and raster cells. Features are length-weighted means of clipped
/// segment lengths; population is area-weighted from the raster.
pub fn aggregate_grid<T: Real>(
    segments: &[RoadSegment<T>],
    table: &FeatureTable<T>,
    population_raster: &[PopulationCell<T>],
    cell_size_m: T,
) -> Result<Grid<T>> {
    if !(cell_size_m > T::zero()) {
        return Err(Error::Config("grid cell size must be > 0".into()));
    }
    if table.n_rows() != segments.len() {
        return Err(Error::Input("feature table and segments differ in row count".into()));
    }
    let mut bounds: Option<Rect<T>> = None;
    let mut grow = |r: Rect<T>| bounds = Some(bounds.map_or(r, |b| b.union(&r)));
    for s in segments {
        grow(Rect::of_points(&s.geometry).expect("validated"));
    }
    for p in population_raster {
        if !(p.cell_size_m > T::zero()) || p.population < T::zero() {
            return Err(Error::Input("population cells need size > 0 and population >= 0".into()));
        }
        grow(p.rect());
    }
    let b = bounds.ok_or_else(|| Error::Empty("no segments or population cells".into()))?;
    let origin_x = (b.min_x / cell_size_m).floor() * cell_size_m;
    let origin_y = (b.min_y / cell_size_m).floor() * cell_size_m;
    let count = |lo: T, hi: T| ((hi - lo) / cell_size_m).ceil().to_usize().unwrap_or(0).max(1);
    let n_cols = count(origin_x, b.max_x);
    let n_rows = count(origin_y, b.max_y);

    let mut cells = Vec::with_capacity(n_rows * n_cols);
    for row in 0..n_rows {
        for col in 0..n_cols {
            cells.push(GridCell {
                id: GridCell::<T>::cell_id(row, col),
                row,
                col,
                origin_x: origin_x + cell_size_m * T::count(col),
                origin_y: origin_y + cell_size_m * T::count(row),
                size_m: cell_size_m,
                population: T::zero(),
                aggregates: BTreeMap::new(),
                has_supply: false,
            });
        }
    }

    let mut segment_cells = Vec::with_capacity(segments.len());
    for s in segments {
        let bb = Rect::of_points(&s.geometry).expect("validated");
        let (c0, c1) = span(bb.min_x, bb.max_x, origin_x, cell_size_m, n_cols);
        let (r0, r1) = span(bb.min_y, bb.max_y, origin_y, cell_size_m, n_rows);
        let mut parts = Vec::new();
        for row in r0..=r1 {
            for col in c0..=c1 {
                let idx = row * n_cols + col;
                let len = clipped_polyline_length(&s.geometry, &cells[idx].rect());
                if len > T::zero() {
                    parts.push((idx, len));
                }
            }
        }
        segment_cells.push(parts);
    }

    for p in population_raster {
        let r = p.rect();
        let area = r.area();
        let (c0, c1) = span(r.min_x, r.max_x, origin_x, cell_size_m, n_cols);
        let (r0, r1) = span(r.min_y, r.max_y, origin_y, cell_size_m, n_rows);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let idx = row * n_cols + col;
                let ov = cells[idx].rect().overlap_area(&r);
                if ov > T::zero() {
                    cells[idx].population += p.population * ov / area;
                }
            }
        }
    }

    let mut grid = Grid { origin_x, origin_y, cell_size_m, n_rows, n_cols, cells, segment_cells };
    let mut aggregated: Vec<(String, Vec<Option<T>>)> = table
        .columns
        .iter()
        .map(|c| (c.name.clone(), grid.length_weighted_masked(&c.values, Some(&c.missing))))
        .collect();
    if let Some(r) = &table.response {
        aggregated.push((r.name.clone(), grid.length_weighted_masked(&r.values, Some(&r.missing))));
    }
    let coverage: Vec<bool> = {
        let mut cov = vec![false; grid.cells.len()];
        for parts in &grid.segment_cells {
            for &(c, _) in parts {
                cov[c] = true;
            }
        }
        cov
    };
    for (i, cell) in grid.cells.iter_mut().enumerate() {
        cell.has_supply = coverage[i];
        for (name, vals) in &aggregated {
            if let Some(v) = vals[i] {
                cell.aggregates.insert(name.clone(), v);
            }
        }
    }
    Ok(grid)
}
