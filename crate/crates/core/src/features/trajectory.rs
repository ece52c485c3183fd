use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{point_at, point_polyline_distance, polyline_length, Point, Rect};
use crate::real::Real;
use crate::schema::{Column, NormRecord, RoadSegment, TransformKind};

use super::buffers::SegmentIndex;
use super::normalize::normalize_column;

/// GPS fix in projected meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint<T> {
    pub x: T,
    pub y: T,
    pub t: Option<T>,
}

impl<T: Real> TrajectoryPoint<T> {
    pub fn xy(&self) -> Point<T> {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled<T> {
    pub points: Vec<Point<T>>,
    /// Set when the input was too short to resample and passed through.
    pub passthrough: bool,
}

/// Points at arc-length multiples of `interval_m` along the track, plus the
/// final endpoint when it does not coincide with the last multiple.
pub fn resample_trajectory<T: Real>(points: &[TrajectoryPoint<T>], interval_m: T) -> Result<Resampled<T>> {
    if !(interval_m > T::zero()) {
        return Err(Error::Config("resampling interval must be > 0".into()));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::Input("trajectory has non-finite coordinates".into()));
    }
    let line: Vec<Point<T>> = points.iter().map(TrajectoryPoint::xy).collect();
    if line.len() < 2 {
        log::warn!("trajectory with {} point(s) passed through without resampling", line.len());
        return Ok(Resampled { points: line, passthrough: true });
    }
    let total = polyline_length(&line);
    let eps = T::lit(1e-9) * total.max(T::one());
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let s = interval_m * T::count(k);
        if s > total - eps {
            break;
        }
        out.push(point_at(&line, s));
        k += 1;
    }
    out.push(*line.last().expect("len >= 2"));
    Ok(Resampled { points: out, passthrough: false })
}

/// Buffer-matched exercise counts and densities per segment and radius.
#[derive(Debug, Clone, PartialEq)]
pub struct ExerciseDensity<T> {
    pub radii: Vec<T>,
    /// `counts[r][s]`: points within `radii[r]` of segment `s`.
    pub counts: Vec<Vec<usize>>,
    /// `density[r][s] = counts[r][s] / length_m`.
    pub density: Vec<Vec<T>>,
}

pub fn density_column_name<T: Real>(radius: T) -> String {
    format!("log_d{}_norm", radius.round().to_f64_lossy() as i64)
}

impl<T: Real> ExerciseDensity<T> {
    /// `log_d{r}_norm` response columns (log1p then z-score) with their params.
    pub fn standardized(&self) -> Result<Vec<(Column<T>, NormRecord<T>)>> {
        self.radii
            .iter()
            .zip(&self.density)
            .map(|(&r, d)| normalize_column(&Column::complete(density_column_name(r), d.clone()), TransformKind::Log1pZscore))
            .collect()
    }
}

/// Counts points within each radius of every segment polyline; a point may
/// count toward several segments.
pub fn match_density<T: Real>(
    points: &[Point<T>],
    segments: &[RoadSegment<T>],
    radii: &[T],
) -> Result<ExerciseDensity<T>> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > T::zero())) {
        return Err(Error::Config("matching radii must be positive".into()));
    }
    let rmax = radii.iter().copied().fold(T::zero(), T::max);
    let index = SegmentIndex::build(segments, rmax);
    let zero = || vec![vec![0usize; segments.len()]; radii.len()];
    let counts = points
        .par_chunks(4096)
        .fold(zero, |mut acc, chunk| {
            for &p in chunk {
                for s in index.candidates(&Rect::square(p, rmax * T::lit(2.0))) {
                    let d = point_polyline_distance(p, &segments[s].geometry);
                    for (ri, &r) in radii.iter().enumerate() {
                        if d <= r {
                            acc[ri][s] += 1;
                        }
                    }
                }
            }
            acc
        })
        .reduce(zero, |mut a, b| {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
            a
        });
    let density = counts
        .iter()
        .map(|c| c.iter().zip(segments).map(|(&n, s)| T::count(n) / s.length_m).collect())
        .collect();
    Ok(ExerciseDensity { radii: radii.to_vec(), counts, density })
}
