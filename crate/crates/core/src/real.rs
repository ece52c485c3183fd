//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the analytics are generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; every `f64` has a nearest `f32`, so this never fails.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 always converts to a float scalar")
    }

    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to float")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<T: Real>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().copied().sum::<T>() / T::count(values.len()))
}

/// Population (divide-by-n) standard deviation around `mu`.
pub fn population_std<T: Real>(values: &[T], mu: T) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let ss: T = values.iter().map(|&v| (v - mu) * (v - mu)).sum();
    (ss / T::count(values.len())).sqrt()
}

/// Sample (divide-by-n-1) standard deviation; zero for fewer than two values.
pub fn sample_std<T: Real>(values: &[T]) -> T {
    if values.len() < 2 {
        return T::zero();
    }
    let mu = mean(values).unwrap_or_else(T::zero);
    let ss: T = values.iter().map(|&v| (v - mu) * (v - mu)).sum();
    (ss / T::count(values.len() - 1)).sqrt()
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn average_ranks<T: Real>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = T::lit((i + j) as f64 / 2.0 + 1.0);
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> Option<T> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ma = mean(a)?;
    let mb = mean(b)?;
    let mut sab = T::zero();
    let mut saa = T::zero();
    let mut sbb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= T::zero() || sbb <= T::zero() {
        return None;
    }
    Some(sab / (saa.sqrt() * sbb.sqrt()))
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman<T: Real>(a: &[T], b: &[T]) -> Option<T> {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `q * (n - 1)` in the sorted sample).
pub fn quantile_linear<T: Real>(values: &[T], q: T) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let pos = q * T::count(sorted.len() - 1);
    let lo = pos.floor();
    let lo_i = lo.to_usize().unwrap_or(0).min(sorted.len() - 1);
    let hi_i = (lo_i + 1).min(sorted.len() - 1);
    let frac = pos - lo;
    Some(sorted[lo_i] + (sorted[hi_i] - sorted[lo_i]) * frac)
}
