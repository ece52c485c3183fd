//! What-if re-prediction after directed perturbation of top-attributed features.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::invert_value;
use crate::matrix::Matrix;
use crate::real::{self, spearman, Real};
use crate::regressors::Regressor;
use crate::schema::{Dimension, NormRecord};
use crate::shap::ShapMatrix;

pub const DENSITY_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectionRule {
    /// Sign of Spearman(value, φ) over the zone.
    #[default]
    ZoneSpearman,
    /// Sign of the least-squares slope of φ on value over all rows.
    GlobalSlope,
}

impl DirectionRule {
    pub fn as_str(self) -> &'static str {
        match self {
            DirectionRule::ZoneSpearman => "zone_spearman",
            DirectionRule::GlobalSlope => "global_slope",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zone_spearman" => Ok(DirectionRule::ZoneSpearman),
            "global_slope" => Ok(DirectionRule::GlobalSlope),
            other => Err(Error::Config(format!("unknown direction rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    /// Subset of C, P, L; O features count as C.
    pub dimensions: Vec<Dimension>,
    pub intensity: T,
    /// Features kept per dimension.
    pub top_k: usize,
    pub direction: DirectionRule,
}

impl<T: Real> Scenario<T> {
    pub fn new(dimensions: &[Dimension], intensity: T, top_k: usize) -> Self {
        Self { dimensions: dimensions.to_vec(), intensity, top_k, direction: DirectionRule::default() }
    }

    /// Short type label such as `C+P+L`.
    pub fn label(&self) -> String {
        self.dimensions.iter().map(|d| d.as_str()).collect::<Vec<_>>().join("+")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::Config("scenario needs at least one dimension".into()));
        }
        if self.dimensions.iter().any(|d| *d == Dimension::O) {
            return Err(Error::Config("scenario dimensions are drawn from C, P, L".into()));
        }
        if !(self.intensity >= T::zero() && self.intensity <= T::one()) {
            return Err(Error::Config(format!("intensity must lie in [0, 1], got {}", self.intensity)));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// The ten-row grid: each single and paired dimension and all three at 20 % with
/// 5 variables, then all three at 20 %/10, 30 %/10 and 30 %/15.
pub fn default_grid<T: Real>() -> Vec<Scenario<T>> {
    use Dimension::{C, L, P};
    let mut g: Vec<Scenario<T>> = [vec![C], vec![P], vec![L], vec![C, P], vec![C, L], vec![L, P], vec![C, P, L]]
        .iter()
        .map(|d| Scenario::new(d, T::lit(0.2), 5))
        .collect();
    for (delta, k) in [(0.2, 10), (0.3, 10), (0.3, 15)] {
        g.push(Scenario::new(&[C, P, L], T::lit(delta), k));
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedFeature<T> {
    pub index: usize,
    pub name: String,
    pub dimension: Dimension,
    pub mean_abs_phi: T,
    pub zero_impact: bool,
}

/// Ranks each requested dimension's features by mean |φ| over the zone and keeps
/// `top_k` per dimension; the combined list is ordered by mean |φ|, then name.
pub fn rank_features<T: Real>(
    shap: &ShapMatrix<T>,
    feature_dims: &[Dimension],
    dimensions: &[Dimension],
    zone: &[usize],
    top_k: usize,
) -> Result<Vec<RankedFeature<T>>> {
    if zone.is_empty() {
        return Err(Error::Empty("intervention zone has no segments".into()));
    }
    if feature_dims.len() != shap.feature_names.len() {
        return Err(Error::Input("one dimension per SHAP feature required".into()));
    }
    let order = |a: &RankedFeature<T>, b: &RankedFeature<T>| {
        b.mean_abs_phi.partial_cmp(&a.mean_abs_phi).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.name.cmp(&b.name))
    };
    let mut out = Vec::new();
    for &d in dimensions {
        let mut members: Vec<RankedFeature<T>> = (0..feature_dims.len())
            .filter(|&j| feature_dims[j].triad() == d.triad())
            .map(|j| {
                let m = zone.iter().map(|&r| shap.values.get(r, j).abs()).sum::<T>() / T::count(zone.len());
                RankedFeature { index: j, name: shap.feature_names[j].clone(), dimension: d.triad(), mean_abs_phi: m, zero_impact: m == T::zero() }
            })
            .collect();
        members.sort_by(order);
        members.truncate(top_k);
        out.extend(members);
    }
    if out.is_empty() {
        let dims: Vec<&str> = dimensions.iter().map(|d| d.as_str()).collect();
        return Err(Error::Input(format!("no features in dimensions {}", dims.join("+"))));
    }
    out.sort_by(order);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedDelta<T> {
    pub feature: String,
    pub dimension: Dimension,
    pub mean_abs_phi: T,
    pub direction: T,
    pub sigma: T,
    /// Amount added to every zone value.
    pub delta: T,
    pub zero_impact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation<T> {
    pub x: Matrix<T>,
    pub applied: Vec<AppliedDelta<T>>,
    pub skipped: Vec<(String, String)>,
}

fn ls_slope<T: Real>(x: &[T], y: &[T]) -> T {
    let mx = real::mean(x).unwrap_or_else(T::zero);
    let my = real::mean(y).unwrap_or_else(T::zero);
    let sxy: T = x.iter().zip(y).map(|(a, b)| (*a - mx) * (*b - my)).sum();
    let sxx: T = x.iter().map(|a| (*a - mx) * (*a - mx)).sum();
    if sxx > T::zero() { sxy / sxx } else { T::zero() }
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Shifts each ranked feature by direction·δ·σ on zone rows only.
pub fn perturb<T: Real>(
    x: &Matrix<T>,
    features: &[RankedFeature<T>],
    intensity: T,
    shap: &ShapMatrix<T>,
    zone: &[usize],
    rule: DirectionRule,
) -> Result<Perturbation<T>> {
    if !(intensity >= T::zero()) {
        return Err(Error::Config(format!("intensity must be >= 0, got {intensity}")));
    }
    if shap.values.rows() != x.rows() || shap.values.cols() != x.cols() {
        return Err(Error::Input("SHAP matrix does not match feature matrix".into()));
    }
    let mut out = x.clone();
    let mut applied = Vec::new();
    let mut skipped = Vec::new();
    for f in features {
        let j = f.index;
        if j >= x.cols() {
            return Err(Error::Lookup { kind: "feature", id: f.name.clone() });
        }
        let vals: Vec<T> = zone.iter().map(|&r| x.get(r, j)).collect();
        let mu = real::mean(&vals).unwrap_or_else(T::zero);
        let sigma = real::population_std(&vals, mu);
        if !(sigma > T::zero()) {
            skipped.push((f.name.clone(), "zero variance in zone".to_string()));
            continue;
        }
        let direction = match rule {
            DirectionRule::ZoneSpearman => {
                let phis: Vec<T> = zone.iter().map(|&r| shap.values.get(r, j)).collect();
                sign(spearman(&vals, &phis).unwrap_or_else(T::zero))
            }
            DirectionRule::GlobalSlope => sign(ls_slope(&x.column(j), &shap.values.column(j))),
        };
        if direction == T::zero() {
            skipped.push((f.name.clone(), "no value-attribution association".to_string()));
            continue;
        }
        let delta = direction * intensity * sigma;
        for &r in zone {
            out.set(r, j, x.get(r, j) + delta);
        }
        applied.push(AppliedDelta {
            feature: f.name.clone(),
            dimension: f.dimension,
            mean_abs_phi: f.mean_abs_phi,
            direction,
            sigma,
            delta,
            zero_impact: f.zero_impact,
        });
    }
    Ok(Perturbation { x: out, applied, skipped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionReport<T> {
    pub scenario: Scenario<T>,
    pub affected_segments: usize,
    pub ranked: Vec<RankedFeature<T>>,
    pub applied: Vec<AppliedDelta<T>>,
    pub skipped: Vec<(String, String)>,
    pub baseline_density: T,
    pub perturbed_density: T,
    /// Percent change of mean density; absolute change when the baseline is degenerate.
    pub improvement_pct: T,
    pub degenerate_baseline: bool,
    /// Mean change of the prediction in model (standardized) space.
    pub model_scale_delta: T,
}

/// Inputs shared by every scenario of a run.
pub struct SimulationContext<'a, T, M> {
    pub model: &'a M,
    pub x: &'a Matrix<T>,
    pub shap: &'a ShapMatrix<T>,
    pub feature_dims: &'a [Dimension],
    pub response: &'a NormRecord<T>,
    pub zone: &'a [usize],
}

fn density<T: Real>(pred: T, rec: &NormRecord<T>) -> T {
    invert_value(pred, rec)
}

pub fn simulate<T: Real, M: Regressor<T>>(ctx: &SimulationContext<'_, T, M>, scenario: &Scenario<T>) -> Result<InterventionReport<T>> {
    scenario.validate()?;
    let zone = ctx.zone;
    if zone.iter().any(|&r| r >= ctx.x.rows()) {
        return Err(Error::Input("zone row outside the feature matrix".into()));
    }
    let empty = |ranked| InterventionReport {
        scenario: scenario.clone(),
        affected_segments: 0,
        ranked,
        applied: Vec::new(),
        skipped: Vec::new(),
        baseline_density: T::zero(),
        perturbed_density: T::zero(),
        improvement_pct: T::zero(),
        degenerate_baseline: false,
        model_scale_delta: T::zero(),
    };
    if zone.is_empty() {
        return Ok(empty(Vec::new()));
    }
    let ranked = rank_features(ctx.shap, ctx.feature_dims, &scenario.dimensions, zone, scenario.top_k)?;
    let pert = perturb(ctx.x, &ranked, scenario.intensity, ctx.shap, zone, scenario.direction)?;
    let mut base = Vec::with_capacity(zone.len());
    let mut after = Vec::with_capacity(zone.len());
    let mut model_delta = T::zero();
    for &r in zone {
        let p0 = ctx.model.predict_row(ctx.x.row(r));
        let p1 = ctx.model.predict_row(pert.x.row(r));
        model_delta += p1 - p0;
        base.push(density(p0, ctx.response));
        after.push(density(p1, ctx.response));
    }
    let d0 = real::mean(&base).unwrap_or_else(T::zero);
    let d1 = real::mean(&after).unwrap_or_else(T::zero);
    let degenerate = d0 <= T::lit(DENSITY_FLOOR);
    let improvement_pct = if degenerate { d1 - d0 } else { T::lit(100.0) * (d1 - d0) / d0 };
    Ok(InterventionReport {
        scenario: scenario.clone(),
        affected_segments: zone.len(),
        ranked,
        applied: pert.applied,
        skipped: pert.skipped,
        baseline_density: d0,
        perturbed_density: d1,
        improvement_pct,
        degenerate_baseline: degenerate,
        model_scale_delta: model_delta / T::count(zone.len()),
    })
}

#[derive(Debug, Clone)]
pub struct GridRow<T> {
    pub scenario: Scenario<T>,
    pub outcome: std::result::Result<InterventionReport<T>, String>,
}

/// Evaluates every scenario; failures are recorded per row.
pub fn scenario_grid<T: Real, M: Regressor<T>>(ctx: &SimulationContext<'_, T, M>, grid: &[Scenario<T>]) -> Vec<GridRow<T>>
where
    M: Sync,
{
    grid.par_iter()
        .map(|s| GridRow { scenario: s.clone(), outcome: simulate(ctx, s).map_err(|e| e.to_string()) })
        .collect()
}

pub const TABLE_HEADER: &str = "type,intensity_pct,variable_count,improvement_pct,model_scale_delta,affected_segments,top_variables";

/// Scenario table as CSV, one row per grid entry in grid order.
pub fn format_table<T: Real>(rows: &[GridRow<T>]) -> String {
    let mut s = String::from(TABLE_HEADER);
    s.push('\n');
    for row in rows {
        let sc = &row.scenario;
        let pct = sc.intensity * T::lit(100.0);
        match &row.outcome {
            Ok(rep) => {
                let top: Vec<&str> = rep.ranked.iter().take(10).map(|f| f.name.as_str()).collect();
                let _ = writeln!(
                    s,
                    "{},{},{},{:.2},{},{},{}",
                    sc.label(),
                    pct,
                    sc.top_k,
                    rep.improvement_pct,
                    rep.model_scale_delta,
                    rep.affected_segments,
                    top.join(";")
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{},{},{},error,,,{}", sc.label(), pct, sc.top_k, e.replace(',', ";"));
            }
        }
    }
    s
}
