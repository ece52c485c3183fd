use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{point_polyline_distance, GridIndex, Point, Rect};
use crate::real::Real;
use crate::schema::{Column, RoadSegment};

/// Land-use classes recognised in the land-use CSV, emitted as `C_D_<class>`.
pub const LANDUSE_CLASSES: [&str; 7] = ["building", "commercial", "residential", "sparseveg", "transport", "tree", "water"];

/// Bucket index over segment bounding boxes.
#[derive(Debug, Clone)]
pub struct SegmentIndex<T> {
    index: GridIndex<T>,
}

impl<T: Real> SegmentIndex<T> {
    pub fn build(segments: &[RoadSegment<T>], query_radius: T) -> Self {
        let cell = (query_radius * T::lit(2.0)).max(T::lit(25.0));
        let mut index = GridIndex::new(cell);
        for (i, s) in segments.iter().enumerate() {
            if let Some(b) = Rect::of_points(&s.geometry) {
                index.insert(i, &b);
            }
        }
        Self { index }
    }

    pub fn candidates(&self, rect: &Rect<T>) -> Vec<usize> {
        self.index.query(rect)
    }
}

fn point_index<T: Real>(points: impl Iterator<Item = Point<T>>, cell: T) -> GridIndex<T> {
    let mut index = GridIndex::new(cell);
    for (i, p) in points.enumerate() {
        index.insert(i, &Rect { min_x: p.x, min_y: p.y, max_x: p.x, max_y: p.y });
    }
    index
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoiRecord<T> {
    pub x: T,
    pub y: T,
    pub category: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoiEntropy<T> {
    pub entropy: T,
    pub count: usize,
}

impl<T: Real> PoiEntropy<T> {
    /// No POI in range.
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

fn entropy_of<'a, T: Real>(cats: impl Iterator<Item = &'a str>) -> PoiEntropy<T> {
    let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
    let mut n = 0usize;
    for c in cats {
        *tally.entry(c).or_default() += 1;
        n += 1;
    }
    if n == 0 {
        return PoiEntropy { entropy: T::zero(), count: 0 };
    }
    let total = T::count(n);
    let h = tally
        .values()
        .map(|&k| {
            let p = T::count(k) / total;
            -p * p.ln()
        })
        .sum::<T>();
    PoiEntropy { entropy: h.max(T::zero()), count: n }
}

/// Shannon entropy (natural log) of POI categories within `radius_m` of the segment.
pub fn poi_entropy<T: Real>(pois: &[PoiRecord<T>], segment: &RoadSegment<T>, radius_m: T) -> Result<PoiEntropy<T>> {
    if !(radius_m > T::zero()) {
        return Err(Error::Config("POI radius must be > 0".into()));
    }
    Ok(entropy_of(
        pois.iter()
            .filter(|p| point_polyline_distance(Point::new(p.x, p.y), &segment.geometry) <= radius_m)
            .map(|p| p.category.as_str()),
    ))
}

/// [`poi_entropy`] for every segment through a bucket index.
pub fn poi_entropy_all<T: Real>(pois: &[PoiRecord<T>], segments: &[RoadSegment<T>], radius_m: T) -> Result<Vec<PoiEntropy<T>>> {
    if !(radius_m > T::zero()) {
        return Err(Error::Config("POI radius must be > 0".into()));
    }
    let index = point_index(pois.iter().map(|p| Point::new(p.x, p.y)), radius_m.max(T::lit(25.0)));
    Ok(segments
        .par_iter()
        .map(|s| {
            let bbox = Rect::of_points(&s.geometry).expect("validated").expand(radius_m);
            entropy_of(
                index
                    .query(&bbox)
                    .into_iter()
                    .filter(|&i| point_polyline_distance(Point::new(pois[i].x, pois[i].y), &s.geometry) <= radius_m)
                    .map(|i| pois[i].category.as_str()),
            )
        })
        .collect())
}

/// Labeled land-use raster cell; `(x, y)` is the cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct LanduseCell<T> {
    pub x: T,
    pub y: T,
    pub class: String,
    pub cell_size_m: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composition<T> {
    /// Area proportions aligned with [`LANDUSE_CLASSES`].
    pub proportions: Vec<T>,
    /// No cell center within the buffer.
    pub empty: bool,
}

fn class_index(class: &str) -> Result<usize> {
    LANDUSE_CLASSES
        .iter()
        .position(|c| *c == class)
        .ok_or_else(|| Error::schema(format!("C_D_{class}"), format!("unknown land-use class `{class}`")))
}

fn composition_of<T: Real>(cells: impl Iterator<Item = (usize, T)>) -> Composition<T> {
    let mut area = vec![T::zero(); LANDUSE_CLASSES.len()];
    for (k, a) in cells {
        area[k] += a;
    }
    let total: T = area.iter().copied().sum();
    if total <= T::zero() {
        return Composition { proportions: vec![T::zero(); LANDUSE_CLASSES.len()], empty: true };
    }
    Composition { proportions: area.into_iter().map(|a| a / total).collect(), empty: false }
}

/// Area-weighted class proportions of cells whose centers lie within `radius_m`.
pub fn landuse_composition<T: Real>(cells: &[LanduseCell<T>], segment: &RoadSegment<T>, radius_m: T) -> Result<Composition<T>> {
    let mut hits = Vec::new();
    for c in cells {
        let k = class_index(&c.class)?;
        if point_polyline_distance(Point::new(c.x, c.y), &segment.geometry) <= radius_m {
            hits.push((k, c.cell_size_m * c.cell_size_m));
        }
    }
    Ok(composition_of(hits.into_iter()))
}

/// `C_D_<class>` columns for all segments.
pub fn landuse_table<T: Real>(cells: &[LanduseCell<T>], segments: &[RoadSegment<T>], radius_m: T) -> Result<(Vec<Column<T>>, Vec<bool>)> {
    let classes: Vec<usize> = cells.iter().map(|c| class_index(&c.class)).collect::<Result<_>>()?;
    let index = point_index(cells.iter().map(|c| Point::new(c.x, c.y)), radius_m.max(T::lit(25.0)));
    let comps: Vec<Composition<T>> = segments
        .par_iter()
        .map(|s| {
            let bbox = Rect::of_points(&s.geometry).expect("validated").expand(radius_m);
            composition_of(
                index
                    .query(&bbox)
                    .into_iter()
                    .filter(|&i| point_polyline_distance(Point::new(cells[i].x, cells[i].y), &s.geometry) <= radius_m)
                    .map(|i| (classes[i], cells[i].cell_size_m * cells[i].cell_size_m)),
            )
        })
        .collect();
    let cols = LANDUSE_CLASSES
        .iter()
        .enumerate()
        .map(|(k, c)| Column::complete(format!("C_D_{c}"), comps.iter().map(|p| p.proportions[k]).collect()))
        .collect();
    Ok((cols, comps.iter().map(|c| c.empty).collect()))
}
