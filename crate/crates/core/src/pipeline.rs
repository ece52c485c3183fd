//! Raw inputs to a model-ready feature table.

use log::warn;

use crate::error::{Error, Result};
use crate::features::{
    interpolate_with_adjacency, landuse_table, match_density, normalize_column, poi_entropy_all, resample_trajectory,
    density_column_name, ExerciseDensity, LanduseCell, PoiRecord, TrajectoryPoint,
};
use crate::geometry::Point;
use crate::graph::{build_graph, segment_centrality, Centrality, GraphWarning, StreetGraph};
use crate::real::Real;
use crate::schema::{
    classify_feature, validate_dataset, Column, FeatureTable, NormalizationParams, RoadSegment,
    TransformKind, TriadSchema,
};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig<T> {
    pub radii: Vec<T>,
    /// Must be one of `radii`.
    pub response_radius: T,
    pub resample_interval_m: T,
    pub poi_radius_m: T,
    pub landuse_radius_m: T,
    pub centrality_radius_m: T,
    pub snap_tolerance_m: T,
    pub interpolation_rounds: usize,
}

impl<T: Real> Default for FeatureConfig<T> {
    fn default() -> Self {
        Self {
            radii: vec![T::lit(10.0), T::lit(20.0), T::lit(30.0)],
            response_radius: T::lit(30.0),
            resample_interval_m: T::lit(5.0),
            poi_radius_m: T::lit(300.0),
            landuse_radius_m: T::lit(100.0),
            centrality_radius_m: T::lit(800.0),
            snap_tolerance_m: T::lit(0.5),
            interpolation_rounds: 5,
        }
    }
}

impl<T: Real> FeatureConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > T::zero())) {
            return Err(Error::Config("density radii must be positive".into()));
        }
        if !self.radii.contains(&self.response_radius) {
            return Err(Error::Config(format!("response radius {} is not among the density radii", self.response_radius)));
        }
        for (name, v) in [
            ("resample_interval_m", self.resample_interval_m),
            ("poi_radius_m", self.poi_radius_m),
            ("landuse_radius_m", self.landuse_radius_m),
            ("centrality_radius_m", self.centrality_radius_m),
        ] {
            if !(v > T::zero()) {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        if !(self.snap_tolerance_m >= T::zero()) {
            return Err(Error::Config("snap_tolerance_m must be >= 0".into()));
        }
        Ok(())
    }

    pub fn response_name(&self) -> String {
        density_column_name(self.response_radius)
    }
}

/// Everything the feature stage consumes.
#[derive(Debug, Clone, Copy)]
pub struct RawInputs<'a, T> {
    pub segments: &'a [RoadSegment<T>],
    /// Supplied per-segment attributes, rows matched by segment id.
    pub attributes: Option<&'a FeatureTable<T>>,
    pub tracks: &'a [Vec<TrajectoryPoint<T>>],
    pub pois: &'a [PoiRecord<T>],
    pub landuse: &'a [LanduseCell<T>],
}

#[derive(Debug, Clone)]
pub struct FeatureBuild<T> {
    pub graph: StreetGraph<T>,
    pub graph_warnings: Vec<GraphWarning>,
    pub centrality: Vec<Centrality<T>>,
    pub density: ExerciseDensity<T>,
    /// Interpolated, untransformed features in segment order.
    pub raw: FeatureTable<T>,
    /// Standardized features with the chosen response attached.
    pub table: FeatureTable<T>,
    /// Every standardized density column, response included.
    pub densities: Vec<Column<T>>,
    pub params: NormalizationParams<T>,
    /// Model feature names in column order.
    pub features: Vec<String>,
    pub response: String,
    pub interpolated_cells: usize,
}

/// `log1p_zscore` for non-negative columns, plain z-score otherwise.
pub fn transform_for<T: Real>(column: &Column<T>) -> TransformKind {
    if column.known().any(|v| v < T::zero()) {
        TransformKind::Zscore
    } else {
        TransformKind::Log1pZscore
    }
}

fn align<T: Real>(attrs: &FeatureTable<T>, segments: &[RoadSegment<T>]) -> Result<Vec<Column<T>>> {
    let report = validate_dataset(attrs, segments, &TriadSchema::default());
    let fatal: Vec<String> = report
        .issues
        .iter()
        .filter(|i| !matches!(i, crate::schema::Issue::MissingCells { .. }))
        .map(|i| i.to_string())
        .collect();
    if !fatal.is_empty() {
        return Err(Error::Input(format!("attribute table rejected: {}", fatal.join("; "))));
    }
    let rows = attrs.row_index();
    let order: Vec<usize> = segments.iter().map(|s| rows[s.id.as_str()]).collect();
    Ok(attrs
        .columns
        .iter()
        .map(|c| Column {
            name: c.name.clone(),
            values: order.iter().map(|&i| c.values[i]).collect(),
            missing: order.iter().map(|&i| c.missing[i]).collect(),
        })
        .collect())
}

/// Resamples each track and pools the matched points.
pub fn resample_tracks<T: Real>(tracks: &[Vec<TrajectoryPoint<T>>], interval_m: T) -> Result<Vec<Point<T>>> {
    let mut out = Vec::new();
    let mut short = 0usize;
    for t in tracks {
        if t.len() < 2 {
            short += 1;
            out.extend(t.iter().map(TrajectoryPoint::xy));
            continue;
        }
        out.extend(resample_trajectory(t, interval_m)?.points);
    }
    if short > 0 {
        warn!("{short} single-point trajectories passed through without resampling");
    }
    Ok(out)
}

pub fn build_features<T: Real>(inputs: RawInputs<'_, T>, config: &FeatureConfig<T>) -> Result<FeatureBuild<T>> {
    config.validate()?;
    let segments = inputs.segments;
    if segments.is_empty() {
        return Err(Error::Empty("no road segments".into()));
    }
    let (graph, graph_warnings) = build_graph(segments, config.snap_tolerance_m)?;
    let centrality = segment_centrality(&graph, config.centrality_radius_m)?;
    let points = resample_tracks(inputs.tracks, config.resample_interval_m)?;
    let density = match_density(&points, segments, &config.radii)?;

    let ids: Vec<String> = segments.iter().map(|s| s.id.clone()).collect();
    let mut raw = FeatureTable::new(ids.clone());
    let tag = config.centrality_radius_m.round().to_f64_lossy() as i64;
    let cent_cols: [(&str, fn(&Centrality<T>) -> T); 4] = [
        ("deg", |c| c.degree),
        ("clo", |c| c.closeness),
        ("betw", |c| c.betweenness),
        ("depth", |c| c.depth),
    ];
    for (name, get) in cent_cols {
        raw.push(Column::complete(format!("C_{name}_{tag}m"), centrality.iter().map(get).collect()))?;
    }

    let adjacency = graph.segment_adjacency();
    let mut interpolated_cells = 0;
    if let Some(attrs) = inputs.attributes {
        for col in align(attrs, segments)? {
            classify_feature(&col.name, &TriadSchema::default())?;
            let col = if col.missing_count() > 0 {
                let filled = interpolate_with_adjacency(&adjacency, &col, config.interpolation_rounds)?;
                interpolated_cells += col.missing_count();
                if filled.fallback > 0 {
                    warn!("column `{}`: {} cells fell back to the global mean", col.name, filled.fallback);
                }
                filled.column
            } else {
                col
            };
            raw.push(col)?;
        }
    }
    if !inputs.landuse.is_empty() {
        let (cols, empty) = landuse_table(inputs.landuse, segments, config.landuse_radius_m)?;
        let n_empty = empty.iter().filter(|&&e| e).count();
        if n_empty > 0 {
            warn!("{n_empty} segments have no land-use cells in range");
        }
        for c in cols {
            raw.push(c)?;
        }
    }
    if !inputs.pois.is_empty() {
        let ent = poi_entropy_all(inputs.pois, segments, config.poi_radius_m)?;
        let tag = config.poi_radius_m.round().to_f64_lossy() as i64;
        raw.push(Column::complete(format!("L_poi_entropy{tag}"), ent.iter().map(|e| e.entropy).collect()))?;
    }

    let mut table = FeatureTable::new(ids);
    let mut params = NormalizationParams::default();
    for col in &raw.columns {
        let (z, rec) = normalize_column(col, transform_for(col))?;
        table.push(z)?;
        params.upsert(rec);
    }
    let features = table.feature_names();
    let response = config.response_name();
    let mut densities = Vec::new();
    for (z, rec) in density.standardized()? {
        if z.name == response {
            table.set_response(z.clone())?;
        }
        params.upsert(rec);
        densities.push(z);
    }
    Ok(FeatureBuild {
        graph,
        graph_warnings,
        centrality,
        density,
        raw,
        table,
        densities,
        params,
        features,
        response,
        interpolated_cells,
    })
}
