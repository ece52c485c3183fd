//! Planar geometry in projected meters, plus a uniform-grid bucket index.

use std::collections::HashMap;

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Self, t: T) -> Self {
        Self { x: self.x + (other.x - self.x) * t, y: self.y + (other.y - self.y) * t }
    }
}

/// Axis-aligned rectangle `[min_x, max_x] x [min_y, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub min_x: T,
    pub min_y: T,
    pub max_x: T,
    pub max_y: T,
}

impl<T: Real> Rect<T> {
    pub fn square(center: Point<T>, size: T) -> Self {
        let h = size / T::lit(2.0);
        Self { min_x: center.x - h, min_y: center.y - h, max_x: center.x + h, max_y: center.y + h }
    }

    pub fn area(&self) -> T {
        (self.max_x - self.min_x).max(T::zero()) * (self.max_y - self.min_y).max(T::zero())
    }

    pub fn overlap_area(&self, other: &Self) -> T {
        let w = self.max_x.min(other.max_x) - self.min_x.max(other.min_x);
        let h = self.max_y.min(other.max_y) - self.min_y.max(other.min_y);
        if w <= T::zero() || h <= T::zero() {
            T::zero()
        } else {
            w * h
        }
    }

    pub fn expand(&self, by: T) -> Self {
        Self { min_x: self.min_x - by, min_y: self.min_y - by, max_x: self.max_x + by, max_y: self.max_y + by }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            min_x: self.min_x.min(other.min_x),
            min_y: self.min_y.min(other.min_y),
            max_x: self.max_x.max(other.max_x),
            max_y: self.max_y.max(other.max_y),
        }
    }

    pub fn of_points(points: &[Point<T>]) -> Option<Self> {
        let first = points.first()?;
        let mut r = Self { min_x: first.x, min_y: first.y, max_x: first.x, max_y: first.y };
        for p in &points[1..] {
            r.min_x = r.min_x.min(p.x);
            r.min_y = r.min_y.min(p.y);
            r.max_x = r.max_x.max(p.x);
            r.max_y = r.max_y.max(p.y);
        }
        Some(r)
    }
}

pub fn polyline_length<T: Real>(points: &[Point<T>]) -> T {
    points.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance<T: Real>(p: Point<T>, a: Point<T>, b: Point<T>) -> T {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 <= T::zero() {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).max(T::zero()).min(T::one());
    p.dist(Point::new(a.x + dx * t, a.y + dy * t))
}

pub fn point_polyline_distance<T: Real>(p: Point<T>, line: &[Point<T>]) -> T {
    match line {
        [] => T::infinity(),
        [only] => p.dist(*only),
        _ => line
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(T::infinity(), T::min),
    }
}

/// Point at arc length `s` along the polyline (clamped to its ends).
pub fn point_at<T: Real>(line: &[Point<T>], s: T) -> Point<T> {
    let mut remaining = s.max(T::zero());
    for w in line.windows(2) {
        let l = w[0].dist(w[1]);
        if remaining <= l {
            if l <= T::zero() {
                return w[0];
            }
            return w[0].lerp(w[1], remaining / l);
        }
        remaining -= l;
    }
    *line.last().expect("non-empty polyline")
}

/// Length of the part of segment `a`-`b` inside `rect` (Liang-Barsky clipping).
pub fn clipped_segment_length<T: Real>(a: Point<T>, b: Point<T>, rect: &Rect<T>) -> T {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let mut t0 = T::zero();
    let mut t1 = T::one();
    let checks = [
        (-dx, a.x - rect.min_x),
        (dx, rect.max_x - a.x),
        (-dy, a.y - rect.min_y),
        (dy, rect.max_y - a.y),
    ];
    for (p, q) in checks {
        if p == T::zero() {
            if q < T::zero() {
                return T::zero();
            }
        } else {
            let r = q / p;
            if p < T::zero() {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return T::zero();
            }
        }
    }
    (t1 - t0) * dx.hypot(dy)
}

pub fn clipped_polyline_length<T: Real>(line: &[Point<T>], rect: &Rect<T>) -> T {
    line.windows(2).map(|w| clipped_segment_length(w[0], w[1], rect)).sum()
}

/// Uniform grid of buckets mapping cells to item ids; items are inserted by
/// bounding box and queried by rectangle. Queries return candidates only:
/// callers apply the exact distance test.
#[derive(Debug, Clone)]
pub struct GridIndex<T> {
    cell: T,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl<T: Real> GridIndex<T> {
    pub fn new(cell: T) -> Self {
        let cell = if cell > T::zero() { cell } else { T::one() };
        Self { cell, buckets: HashMap::new() }
    }

    fn key(&self, v: T) -> i64 {
        (v / self.cell).floor().to_i64().unwrap_or(0)
    }

    pub fn insert(&mut self, id: usize, bbox: &Rect<T>) {
        for gx in self.key(bbox.min_x)..=self.key(bbox.max_x) {
            for gy in self.key(bbox.min_y)..=self.key(bbox.max_y) {
                self.buckets.entry((gx, gy)).or_default().push(id);
            }
        }
    }

    /// Sorted, deduplicated candidate ids whose buckets touch `rect`.
    pub fn query(&self, rect: &Rect<T>) -> Vec<usize> {
        let mut out = Vec::new();
        for gx in self.key(rect.min_x)..=self.key(rect.max_x) {
            for gy in self.key(rect.min_y)..=self.key(rect.max_y) {
                if let Some(ids) = self.buckets.get(&(gx, gy)) {
                    out.extend_from_slice(ids);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_cases() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(10.0, 0.0);
        assert_eq!(point_segment_distance(Point::new(5.0, 3.0), a, b), 3.0);
        assert_eq!(point_segment_distance(Point::new(13.0, 4.0), a, b), 5.0);
        assert_eq!(point_segment_distance(Point::new(-3.0, 0.0), a, a), 3.0);
    }

    #[test]
    fn clipping_inside_crossing_outside() {
        let r = Rect { min_x: 0.0, min_y: 0.0, max_x: 10.0, max_y: 10.0 };
        let l: f64 = clipped_segment_length(Point::new(-5.0, 5.0), Point::new(15.0, 5.0), &r);
        assert!((l - 10.0).abs() < 1e-12);
        assert_eq!(clipped_segment_length(Point::new(2.0, 2.0), Point::new(4.0, 2.0), &r), 2.0);
        assert_eq!(clipped_segment_length(Point::new(-5.0, 20.0), Point::new(15.0, 20.0), &r), 0.0);
    }

    #[test]
    fn point_at_walks_polyline() {
        let line = [Point::new(0.0, 0.0), Point::new(3.0, 0.0), Point::new(3.0, 4.0)];
        assert_eq!(point_at(&line, 5.0), Point::new(3.0, 2.0));
        assert_eq!(point_at(&line, 99.0), Point::new(3.0, 4.0));
    }

    #[test]
    fn grid_index_returns_touching_items() {
        let mut idx = GridIndex::new(10.0);
        idx.insert(0, &Rect { min_x: 0.0, min_y: 0.0, max_x: 5.0, max_y: 5.0 });
        idx.insert(1, &Rect { min_x: 50.0, min_y: 50.0, max_x: 55.0, max_y: 55.0 });
        assert_eq!(idx.query(&Rect { min_x: 1.0, min_y: 1.0, max_x: 2.0, max_y: 2.0 }), vec![0]);
        assert!(idx.query(&Rect { min_x: 30.0, min_y: 30.0, max_x: 31.0, max_y: 31.0 }).is_empty());
    }
}
