//! Eight-way deprivation typology from quantile-thresholded group scores.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::real::{quantile_linear, Real};
use crate::schema::Dimension;
use crate::shap::GroupContribution;

pub const DEFAULT_QUANTILE: f64 = 0.8;
pub const MIN_SEGMENTS: usize = 5;
pub const CITYWIDE: &str = "citywide";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeprivationMode {
    /// D = −Σφ over the dimension.
    #[default]
    NegatedSum,
    /// D = Σ max(0, −φᵢ) over the dimension.
    NegativeOnly,
}

impl DeprivationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DeprivationMode::NegatedSum => "negated_sum",
            DeprivationMode::NegativeOnly => "negative_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "negated_sum" => Ok(DeprivationMode::NegatedSum),
            "negative_only" => Ok(DeprivationMode::NegativeOnly),
            other => Err(Error::Config(format!("unknown deprivation mode '{other}'"))),
        }
    }
}

/// Per-segment (D_C, D_P, D_L); objective land use counts as conceived.
pub fn deprivation_scores<T: Real>(groups: &GroupContribution<T>, mode: DeprivationMode) -> Vec<[T; 3]> {
    let src = match mode {
        DeprivationMode::NegatedSum => &groups.sums,
        DeprivationMode::NegativeOnly => &groups.negative,
    };
    let sign = match mode {
        DeprivationMode::NegatedSum => -T::one(),
        DeprivationMode::NegativeOnly => T::one(),
    };
    src.iter()
        .map(|v| {
            let c = v[Dimension::C.index()] + v[Dimension::O.index()];
            [sign * c, sign * v[Dimension::P.index()], sign * v[Dimension::L.index()]]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Typology {
    None,
    COnly,
    POnly,
    LOnly,
    CP,
    CL,
    PL,
    CPL,
}

impl Typology {
    pub const ALL: [Typology; 8] =
        [Typology::None, Typology::COnly, Typology::POnly, Typology::LOnly, Typology::CP, Typology::CL, Typology::PL, Typology::CPL];

    pub fn from_flags(c: bool, p: bool, l: bool) -> Self {
        match (c, p, l) {
            (false, false, false) => Typology::None,
            (true, false, false) => Typology::COnly,
            (false, true, false) => Typology::POnly,
            (false, false, true) => Typology::LOnly,
            (true, true, false) => Typology::CP,
            (true, false, true) => Typology::CL,
            (false, true, true) => Typology::PL,
            (true, true, true) => Typology::CPL,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Typology::None => "None",
            Typology::COnly => "C-only",
            Typology::POnly => "P-only",
            Typology::LOnly => "L-only",
            Typology::CP => "CP",
            Typology::CL => "CL",
            Typology::PL => "PL",
            Typology::CPL => "CPL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Typology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypologyResult<T> {
    pub labels: Vec<Typology>,
    pub scores: Vec<[T; 3]>,
    /// Analysis region of every segment.
    pub regions: Vec<String>,
    /// q-quantile of (D_C, D_P, D_L) per region.
    pub thresholds: BTreeMap<String, [T; 3]>,
    pub quantile: T,
}

impl<T: Real> TypologyResult<T> {
    pub fn counts(&self) -> BTreeMap<Typology, usize> {
        let mut m: BTreeMap<Typology, usize> = Typology::ALL.iter().map(|t| (*t, 0)).collect();
        for l in &self.labels {
            *m.entry(*l).or_default() += 1;
        }
        m
    }
}

/// Citywide classification.
pub fn classify_typology<T: Real>(scores: &[[T; 3]], q: T) -> Result<TypologyResult<T>> {
    classify_by_region(scores, &vec![CITYWIDE.to_string(); scores.len()], q)
}

/// Thresholds are computed separately within each region.
pub fn classify_by_region<T: Real>(scores: &[[T; 3]], regions: &[String], q: T) -> Result<TypologyResult<T>> {
    if !(q > T::zero() && q < T::one()) {
        return Err(Error::Config(format!("typology quantile must lie in (0, 1), got {q}")));
    }
    if regions.len() != scores.len() {
        return Err(Error::Input("one region per segment required".into()));
    }
    if scores.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Input("deprivation scores must be finite".into()));
    }
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in regions.iter().enumerate() {
        members.entry(r.as_str()).or_default().push(i);
    }
    if members.is_empty() {
        return Err(Error::Size(format!("typology needs at least {MIN_SEGMENTS} segments, got 0")));
    }
    let mut thresholds = BTreeMap::new();
    let mut labels = vec![Typology::None; scores.len()];
    for (region, idx) in members {
        if idx.len() < MIN_SEGMENTS {
            return Err(Error::Size(format!(
                "region '{region}' has {} segments; typology needs at least {MIN_SEGMENTS}",
                idx.len()
            )));
        }
        let mut thr = [T::zero(); 3];
        for (d, t) in thr.iter_mut().enumerate() {
            let v: Vec<T> = idx.iter().map(|&i| scores[i][d]).collect();
            *t = quantile_linear(&v, q).expect("region is non-empty");
        }
        for &i in &idx {
            let s = scores[i];
            labels[i] = Typology::from_flags(s[0] > thr[0], s[1] > thr[1], s[2] > thr[2]);
        }
        thresholds.insert(region.to_string(), thr);
    }
    Ok(TypologyResult { labels, scores: scores.to_vec(), regions: regions.to_vec(), thresholds, quantile: q })
}
