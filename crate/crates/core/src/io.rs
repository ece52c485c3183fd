//! CSV and GeoJSON readers and writers for every pipeline artifact.
//!
//! Reals are written with `Display`, the shortest text that parses back to
//! the same value, so write-then-read is bit-exact for finite values. Missing
//! feature cells are written as empty fields; `NA` and `NaN` also read as
//! missing.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::features::{LanduseCell, PoiRecord, PopulationCell, TrajectoryPoint};
use crate::geometry::Point;
use crate::graph::Centrality;
use crate::lisa::{Cluster, LisaResult};
use crate::real::Real;
use crate::schema::{Column, Dimension, FeatureTable, GridCell, NormRecord, NormalizationParams, RoadSegment, TransformKind};
use crate::shap::{GroupContribution, ShapMatrix};
use crate::typology::{Typology, TypologyResult};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `text`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parsed CSV: trimmed header plus records with their 1-based line numbers.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl CsvTable {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::parse(path, 1, e.to_string()))?
            .iter()
            .map(|h| h.trim_start_matches('\u{feff}').to_string())
            .collect();
        if headers.iter().all(|h| h.is_empty()) {
            return Err(Error::parse(path, 1, "missing header row"));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::parse(path, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Self { path: path.to_path_buf(), headers, rows })
    }

    pub fn open(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| Error::parse(&self.path, 1, format!("missing column `{name}`")))
    }

    fn err(&self, line: usize, reason: impl Into<String>) -> Error {
        Error::parse(&self.path, line, reason)
    }

    fn real<T: Real>(&self, line: usize, rec: &[String], col: usize) -> Result<T> {
        let s = &rec[col];
        let v: T = s.parse().map_err(|_| self.err(line, format!("`{}`: cannot parse `{s}` as a number", self.headers[col])))?;
        if !v.is_finite() {
            return Err(self.err(line, format!("`{}`: non-finite value `{s}`", self.headers[col])));
        }
        Ok(v)
    }

    fn optional_real<T: Real>(&self, line: usize, rec: &[String], col: usize) -> Result<Option<T>> {
        let s = rec[col].as_str();
        if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
            return Ok(None);
        }
        self.real(line, rec, col).map(Some)
    }

    fn usize(&self, line: usize, rec: &[String], col: usize) -> Result<usize> {
        rec[col].parse().map_err(|_| self.err(line, format!("`{}`: expected a non-negative integer", self.headers[col])))
    }

    fn text(&self, line: usize, rec: &[String], col: usize) -> Result<String> {
        let s = rec[col].clone();
        if s.is_empty() {
            return Err(self.err(line, format!("`{}` must not be empty", self.headers[col])));
        }
        Ok(s)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn real_field<T: Real>(v: T) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

// Segments.

/// GeoJSON LineString features with `id` and optional `district` properties.
pub fn parse_segments_geojson<T: Real>(text: &str, path: &Path) -> Result<Vec<RoadSegment<T>>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(path, 1, "expected a FeatureCollection with a `features` array"))?;
    let mut out = Vec::with_capacity(features.len());
    for (k, f) in features.iter().enumerate() {
        let bad = |reason: String| Error::Input(format!("{}: feature {k}: {reason}", path.display()));
        let props = f.get("properties").ok_or_else(|| bad("no properties".into()))?;
        let id = match props.get("id") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(bad("missing `id` property".into())),
        };
        let district = props.get("district").and_then(Value::as_str).map(str::to_string);
        let geom = f.get("geometry").ok_or_else(|| bad("no geometry".into()))?;
        if geom.get("type").and_then(Value::as_str) != Some("LineString") {
            return Err(bad(format!("segment `{id}` is not a LineString")));
        }
        let coords = geom.get("coordinates").and_then(Value::as_array).ok_or_else(|| bad("no coordinates".into()))?;
        let mut pts = Vec::with_capacity(coords.len());
        for c in coords {
            let xy = c.as_array().filter(|a| a.len() >= 2).ok_or_else(|| bad(format!("segment `{id}`: bad coordinate")))?;
            let num = |v: &Value| v.as_f64().ok_or_else(|| bad(format!("segment `{id}`: non-numeric coordinate")));
            pts.push(Point::new(T::lit(num(&xy[0])?), T::lit(num(&xy[1])?)));
        }
        out.push(RoadSegment::new(id, pts, district)?);
    }
    Ok(out)
}

pub fn write_segments_geojson<T: Real>(segments: &[RoadSegment<T>]) -> String {
    let features: Vec<Value> = segments
        .iter()
        .map(|s| {
            let coords: Vec<Value> = s.geometry.iter().map(|p| json!([p.x.to_f64_lossy(), p.y.to_f64_lossy()])).collect();
            json!({
                "type": "Feature",
                "properties": { "id": s.id, "district": s.district },
                "geometry": { "type": "LineString", "coordinates": coords },
            })
        })
        .collect();
    let doc = json!({ "type": "FeatureCollection", "features": features });
    let mut s = serde_json::to_string(&doc).expect("json value serializes");
    s.push('\n');
    s
}

/// `LINESTRING (x y, x y, ...)`.
pub fn parse_wkt_linestring<T: Real>(wkt: &str) -> Option<Vec<Point<T>>> {
    let w = wkt.trim();
    let body = w.get(..10).filter(|h| h.eq_ignore_ascii_case("linestring")).map(|_| w[10..].trim())?;
    let inner = body.strip_prefix('(')?.strip_suffix(')')?;
    inner
        .split(',')
        .map(|pair| {
            let mut it = pair.split_whitespace();
            let x = it.next()?.parse().ok()?;
            let y = it.next()?.parse().ok()?;
            Some(Point::new(x, y))
        })
        .collect()
}

pub fn format_wkt_linestring<T: Real>(points: &[Point<T>]) -> String {
    let body: Vec<String> = points.iter().map(|p| format!("{} {}", p.x, p.y)).collect();
    format!("LINESTRING ({})", body.join(", "))
}

/// CSV with columns `id, wkt, district`.
pub fn parse_segments_csv<T: Real>(text: &str, path: &Path) -> Result<Vec<RoadSegment<T>>> {
    let t = CsvTable::parse(text, path)?;
    let (ci, cw) = (t.require("id")?, t.require("wkt")?);
    let cd = t.column("district");
    t.rows
        .iter()
        .map(|(line, r)| {
            let id = t.text(*line, r, ci)?;
            let pts = parse_wkt_linestring(&r[cw]).ok_or_else(|| t.err(*line, format!("segment `{id}`: bad LINESTRING wkt")))?;
            let district = cd.map(|c| r[c].clone()).filter(|d| !d.is_empty());
            RoadSegment::new(id, pts, district).map_err(|e| t.err(*line, e.to_string()))
        })
        .collect()
}

pub fn write_segments_csv<T: Real>(segments: &[RoadSegment<T>]) -> String {
    let mut s = String::from("id,wkt,district\n");
    for seg in segments {
        let _ = writeln!(
            s,
            "{},{},{}",
            csv_field(&seg.id),
            csv_field(&format_wkt_linestring(&seg.geometry)),
            csv_field(seg.district.as_deref().unwrap_or(""))
        );
    }
    s
}

/// Reads segments by extension: `.csv` as id/wkt/district, anything else as GeoJSON.
pub fn read_segments<T: Real>(path: &Path) -> Result<Vec<RoadSegment<T>>> {
    let text = read_text(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        parse_segments_csv(&text, path)
    } else {
        parse_segments_geojson(&text, path)
    }
}

// Feature tables.

/// First column `segment_id`; the column named `response`, if given, becomes the table response.
pub fn parse_feature_table<T: Real>(text: &str, path: &Path, response: Option<&str>) -> Result<FeatureTable<T>> {
    let t = CsvTable::parse(text, path)?;
    if t.headers.first().map(String::as_str) != Some("segment_id") {
        return Err(t.err(1, "first column must be `segment_id`"));
    }
    let mut ids = Vec::with_capacity(t.rows.len());
    let mut cols: Vec<Vec<Option<T>>> = vec![Vec::with_capacity(t.rows.len()); t.headers.len() - 1];
    for (line, r) in &t.rows {
        ids.push(t.text(*line, r, 0)?);
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(t.optional_real(*line, r, c + 1)?);
        }
    }
    let mut table = FeatureTable::new(ids);
    for (name, vals) in t.headers[1..].iter().zip(cols) {
        let col = Column::with_missing(name.clone(), vals);
        if Some(name.as_str()) == response {
            table.set_response(col)?;
        } else {
            table.push(col)?;
        }
    }
    if let Some(r) = response {
        if table.response.is_none() {
            return Err(t.err(1, format!("response column `{r}` not found")));
        }
    }
    Ok(table)
}

pub fn read_feature_table<T: Real>(path: &Path, response: Option<&str>) -> Result<FeatureTable<T>> {
    parse_feature_table(&read_text(path)?, path, response)
}

/// Features in column order, then the response if present.
pub fn write_feature_table<T: Real>(table: &FeatureTable<T>) -> String {
    let cols: Vec<&Column<T>> = table.columns.iter().chain(table.response.as_ref()).collect();
    let mut s = String::from("segment_id");
    for c in &cols {
        s.push(',');
        s.push_str(&csv_field(&c.name));
    }
    s.push('\n');
    for (r, id) in table.segment_ids.iter().enumerate() {
        s.push_str(&csv_field(id));
        for c in &cols {
            s.push(',');
            if !c.missing[r] {
                s.push_str(&real_field(c.values[r]));
            }
        }
        s.push('\n');
    }
    s
}

pub fn parse_norm_params<T: Real>(text: &str, path: &Path) -> Result<NormalizationParams<T>> {
    let t = CsvTable::parse(text, path)?;
    let (cf, ck, cm, cs) = (t.require("feature")?, t.require("kind")?, t.require("mean")?, t.require("std")?);
    let mut p = NormalizationParams::default();
    for (line, r) in &t.rows {
        let kind = TransformKind::parse(&r[ck]).ok_or_else(|| t.err(*line, format!("unknown transform kind `{}`", r[ck])))?;
        let std: T = t.real(*line, r, cs)?;
        p.records.push(NormRecord {
            feature: t.text(*line, r, cf)?,
            kind,
            mean: t.real(*line, r, cm)?,
            std,
            degenerate: kind != TransformKind::None && std == T::zero(),
        });
    }
    Ok(p)
}

pub fn read_norm_params<T: Real>(path: &Path) -> Result<NormalizationParams<T>> {
    parse_norm_params(&read_text(path)?, path)
}

pub fn write_norm_params<T: Real>(params: &NormalizationParams<T>) -> String {
    let mut s = String::from("feature,kind,mean,std\n");
    for r in &params.records {
        let _ = writeln!(s, "{},{},{},{}", csv_field(&r.feature), r.kind.as_str(), r.mean, r.std);
    }
    s
}

// Raw spatial inputs.

/// `x, y[, t][, track_id]`. Rows group into tracks by `track_id` in order of
/// first appearance; without the column the whole file is one track.
pub fn parse_trajectories<T: Real>(text: &str, path: &Path) -> Result<Vec<Vec<TrajectoryPoint<T>>>> {
    let t = CsvTable::parse(text, path)?;
    let (cx, cy) = (t.require("x")?, t.require("y")?);
    let (ct, cid) = (t.column("t"), t.column("track_id"));
    let mut tracks: Vec<Vec<TrajectoryPoint<T>>> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for (line, r) in &t.rows {
        let p = TrajectoryPoint {
            x: t.real(*line, r, cx)?,
            y: t.real(*line, r, cy)?,
            t: match ct {
                Some(c) => t.optional_real(*line, r, c)?,
                None => None,
            },
        };
        let key = cid.map(|c| r[c].clone()).unwrap_or_default();
        let k = *slot.entry(key).or_insert_with(|| {
            tracks.push(Vec::new());
            tracks.len() - 1
        });
        tracks[k].push(p);
    }
    Ok(tracks)
}

pub fn read_trajectories<T: Real>(path: &Path) -> Result<Vec<Vec<TrajectoryPoint<T>>>> {
    parse_trajectories(&read_text(path)?, path)
}

/// One `(track_id, points)` pair per track.
pub fn write_trajectories<T: Real>(tracks: &[(String, Vec<TrajectoryPoint<T>>)]) -> String {
    let mut s = String::from("x,y,t,track_id\n");
    for (id, pts) in tracks {
        for p in pts {
            let _ = writeln!(s, "{},{},{},{}", p.x, p.y, p.t.map(real_field).unwrap_or_default(), csv_field(id));
        }
    }
    s
}

pub fn parse_pois<T: Real>(text: &str, path: &Path) -> Result<Vec<PoiRecord<T>>> {
    let t = CsvTable::parse(text, path)?;
    let (cx, cy, cc) = (t.require("x")?, t.require("y")?, t.require("category")?);
    t.rows
        .iter()
        .map(|(line, r)| Ok(PoiRecord { x: t.real(*line, r, cx)?, y: t.real(*line, r, cy)?, category: t.text(*line, r, cc)? }))
        .collect()
}

pub fn read_pois<T: Real>(path: &Path) -> Result<Vec<PoiRecord<T>>> {
    parse_pois(&read_text(path)?, path)
}

pub fn write_pois<T: Real>(pois: &[PoiRecord<T>]) -> String {
    let mut s = String::from("x,y,category\n");
    for p in pois {
        let _ = writeln!(s, "{},{},{}", p.x, p.y, csv_field(&p.category));
    }
    s
}

pub fn parse_landuse<T: Real>(text: &str, path: &Path) -> Result<Vec<LanduseCell<T>>> {
    let t = CsvTable::parse(text, path)?;
    let (cx, cy, cc, cs) = (t.require("x")?, t.require("y")?, t.require("class")?, t.require("cell_size_m")?);
    t.rows
        .iter()
        .map(|(line, r)| {
            Ok(LanduseCell {
                x: t.real(*line, r, cx)?,
                y: t.real(*line, r, cy)?,
                class: t.text(*line, r, cc)?,
                cell_size_m: t.real(*line, r, cs)?,
            })
        })
        .collect()
}

pub fn read_landuse<T: Real>(path: &Path) -> Result<Vec<LanduseCell<T>>> {
    parse_landuse(&read_text(path)?, path)
}

pub fn write_landuse<T: Real>(cells: &[LanduseCell<T>]) -> String {
    let mut s = String::from("x,y,class,cell_size_m\n");
    for c in cells {
        let _ = writeln!(s, "{},{},{},{}", c.x, c.y, csv_field(&c.class), c.cell_size_m);
    }
    s
}

pub fn parse_population<T: Real>(text: &str, path: &Path) -> Result<Vec<PopulationCell<T>>> {
    let t = CsvTable::parse(text, path)?;
    let (cx, cy, cs, cp) = (t.require("x")?, t.require("y")?, t.require("cell_size_m")?, t.require("population")?);
    t.rows
        .iter()
        .map(|(line, r)| {
            Ok(PopulationCell {
                x: t.real(*line, r, cx)?,
                y: t.real(*line, r, cy)?,
                cell_size_m: t.real(*line, r, cs)?,
                population: t.real(*line, r, cp)?,
            })
        })
        .collect()
}

pub fn read_population<T: Real>(path: &Path) -> Result<Vec<PopulationCell<T>>> {
    parse_population(&read_text(path)?, path)
}

pub fn write_population<T: Real>(cells: &[PopulationCell<T>]) -> String {
    let mut s = String::from("x,y,cell_size_m,population\n");
    for c in cells {
        let _ = writeln!(s, "{},{},{},{}", c.x, c.y, c.cell_size_m, c.population);
    }
    s
}

// Stage outputs.

pub fn write_centrality<T: Real>(ids: &[String], metrics: &[Centrality<T>], radius_m: T) -> String {
    let r = radius_m.round().to_f64_lossy() as i64;
    let mut s = format!("segment_id,C_deg_{r}m,C_clo_{r}m,C_betw_{r}m,C_depth_{r}m\n");
    for (id, m) in ids.iter().zip(metrics) {
        let _ = writeln!(s, "{},{},{},{},{}", csv_field(id), m.degree, m.closeness, m.betweenness, m.depth);
    }
    s
}

/// `segment_id, base_value, φ per feature, phi_C, phi_O, phi_P, phi_L`.
pub fn write_shap<T: Real>(ids: &[String], shap: &ShapMatrix<T>, groups: &GroupContribution<T>) -> String {
    let mut s = String::from("segment_id,base_value");
    for n in &shap.feature_names {
        s.push(',');
        s.push_str(&csv_field(n));
    }
    for d in Dimension::ALL {
        let _ = write!(s, ",phi_{}", d.as_str());
    }
    s.push('\n');
    for (r, id) in ids.iter().enumerate() {
        let _ = write!(s, "{},{}", csv_field(id), shap.base_value);
        for v in shap.values.row(r) {
            let _ = write!(s, ",{v}");
        }
        for v in groups.sums[r] {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Segment ids and the SHAP matrix from a file written by [`write_shap`].
pub fn parse_shap<T: Real>(text: &str, path: &Path) -> Result<(Vec<String>, ShapMatrix<T>)> {
    let t = CsvTable::parse(text, path)?;
    if t.headers.len() < 6 || t.headers[0] != "segment_id" || t.headers[1] != "base_value" {
        return Err(t.err(1, "expected `segment_id,base_value,<features>,phi_C,phi_O,phi_P,phi_L`"));
    }
    let p = t.headers.len() - 6;
    let names: Vec<String> = t.headers[2..2 + p].to_vec();
    let mut ids = Vec::with_capacity(t.rows.len());
    let mut data = Vec::with_capacity(t.rows.len() * p);
    let mut base = None;
    for (line, r) in &t.rows {
        ids.push(t.text(*line, r, 0)?);
        let b: T = t.real(*line, r, 1)?;
        if base.is_some_and(|v| v != b) {
            return Err(t.err(*line, "base_value differs between rows"));
        }
        base = Some(b);
        for c in 0..p {
            data.push(t.real(*line, r, 2 + c)?);
        }
    }
    let values = crate::matrix::Matrix::new(ids.len(), p, data)?;
    Ok((ids, ShapMatrix { base_value: base.unwrap_or_else(T::zero), values, feature_names: names }))
}

pub fn read_shap<T: Real>(path: &Path) -> Result<(Vec<String>, ShapMatrix<T>)> {
    parse_shap(&read_text(path)?, path)
}

pub fn write_typology<T: Real>(ids: &[String], result: &TypologyResult<T>) -> String {
    let mut s = String::from("segment_id,D_C,D_P,D_L,label\n");
    for (i, id) in ids.iter().enumerate() {
        let [c, p, l] = result.scores[i];
        let _ = writeln!(s, "{},{c},{p},{l},{}", csv_field(id), result.labels[i]);
    }
    s
}

/// Segment ids, scores and labels.
pub fn parse_typology<T: Real>(text: &str, path: &Path) -> Result<Vec<(String, [T; 3], Typology)>> {
    let t = CsvTable::parse(text, path)?;
    let cols = [t.require("segment_id")?, t.require("D_C")?, t.require("D_P")?, t.require("D_L")?, t.require("label")?];
    t.rows
        .iter()
        .map(|(line, r)| {
            let label = Typology::parse(&r[cols[4]]).ok_or_else(|| t.err(*line, format!("unknown label `{}`", r[cols[4]])))?;
            let scores = [t.real(*line, r, cols[1])?, t.real(*line, r, cols[2])?, t.real(*line, r, cols[3])?];
            Ok((t.text(*line, r, cols[0])?, scores, label))
        })
        .collect()
}

pub fn read_typology<T: Real>(path: &Path) -> Result<Vec<(String, [T; 3], Typology)>> {
    parse_typology(&read_text(path)?, path)
}

/// One row per analysed cell; `cells[k]` is the grid cell behind LISA unit `k`.
pub fn write_lisa<T: Real>(cells: &[&GridCell<T>], lisa: &LisaResult<T>) -> String {
    let mut s = String::from("cell_id,row,col,z_pop,lag_supply,I,pseudo_p,cluster\n");
    for (k, c) in cells.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            csv_field(&c.id),
            c.row,
            c.col,
            lisa.z_x[k],
            lisa.lag_y[k],
            lisa.local_i[k],
            lisa.pseudo_p[k],
            lisa.clusters[k]
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct LisaRow<T> {
    pub cell_id: String,
    pub row: usize,
    pub col: usize,
    pub z_pop: T,
    pub lag_supply: T,
    pub local_i: T,
    pub pseudo_p: T,
    pub cluster: Cluster,
}

pub fn parse_lisa<T: Real>(text: &str, path: &Path) -> Result<Vec<LisaRow<T>>> {
    let t = CsvTable::parse(text, path)?;
    let names = ["cell_id", "row", "col", "z_pop", "lag_supply", "I", "pseudo_p", "cluster"];
    let c: Vec<usize> = names.iter().map(|n| t.require(n)).collect::<Result<_>>()?;
    t.rows
        .iter()
        .map(|(line, r)| {
            Ok(LisaRow {
                cell_id: t.text(*line, r, c[0])?,
                row: t.usize(*line, r, c[1])?,
                col: t.usize(*line, r, c[2])?,
                z_pop: t.real(*line, r, c[3])?,
                lag_supply: t.real(*line, r, c[4])?,
                local_i: t.real(*line, r, c[5])?,
                pseudo_p: t.real(*line, r, c[6])?,
                cluster: Cluster::parse(&r[c[7]]).map_err(|_| t.err(*line, format!("unknown cluster `{}`", r[c[7]])))?,
            })
        })
        .collect()
}

pub fn read_lisa<T: Real>(path: &Path) -> Result<Vec<LisaRow<T>>> {
    parse_lisa(&read_text(path)?, path)
}

/// File names written by [`write_synth_city`], relative to its directory.
pub const SYNTH_FILES: [&str; 8] = [
    "segments.geojson",
    "attributes.csv",
    "trajectories.csv",
    "pois.csv",
    "landuse.csv",
    "population.csv",
    "truth.csv",
    "truth_features.csv",
];

/// Writes a generated city in the ingest formats plus its ground truth.
pub fn write_synth_city<T: Real>(city: &crate::synth::SynthCity<T>, dir: &Path) -> Result<Vec<PathBuf>> {
    let ids: Vec<String> = city.segments.iter().map(|s| s.id.clone()).collect();
    let tracks: Vec<(String, Vec<TrajectoryPoint<T>>)> =
        city.trajectories.iter().map(|t| (t.id.clone(), t.points.clone())).collect();
    let g = &city.truth;
    let mut truth = String::from("segment_id,g_C,g_P,g_L,signal,y,count,planted\n");
    for (i, id) in ids.iter().enumerate() {
        let _ = writeln!(
            truth,
            "{},{},{},{},{},{},{},{}",
            csv_field(id),
            g.g_c[i],
            g.g_p[i],
            g.g_l[i],
            g.signal[i],
            g.y[i],
            g.counts[i],
            u8::from(g.planted[i])
        );
    }
    let texts = [
        write_segments_geojson(&city.segments),
        write_feature_table(&city.attributes),
        write_trajectories(&tracks),
        write_pois(&city.pois),
        write_landuse(&city.landuse),
        write_population(&city.population),
        truth,
        write_feature_table(&city.features),
    ];
    let mut out = Vec::new();
    for (name, text) in SYNTH_FILES.iter().zip(texts) {
        let p = dir.join(name);
        write_text(&p, &text)?;
        out.push(p);
    }
    Ok(out)
}
