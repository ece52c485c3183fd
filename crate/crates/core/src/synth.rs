//! Deterministic synthetic city with a planted triad response.
//!
//! All randomness comes from ChaCha8 streams keyed by `(seed, label, unit)`
//! (see [`crate::rng`]), so a seed reproduces the city bit-for-bit.
//!
//! Network: a `blocks_x × blocks_y` lattice of straight segments whose nodes
//! are jittered uniformly by up to `±irregularity · block_m / 4` per axis.
//!
//! Planted features (before any pipeline normalization):
//! - `C_free_speed`: 60, 45 or 30 km/h by lattice line (every fifth line
//!   arterial, lines ≡ 2 mod 5 collectors), plus N(0, 3²), floored at 10.
//! - `C_capacity`: lanes (3/2/1 by class) × (800 + 10 · speed).
//! - `P_*`: seven street-view proportions, softmax of `0.6·field + 0.4·noise`.
//! - `L_sentiment`: `tanh(0.8·field + 0.5·noise)`; `L_total_weibo_count`:
//!   `floor(exp(3 + 0.7·field + 0.5·noise))`.
//! - `C_D_*` land use on a 20 m raster, `L_poi_entropy300` from generated POIs,
//!   and the four 800 m centralities, all measured by the library itself.
//!
//! With `z(·)` the population z-score over segments and `[·]` an indicator,
//! - `g_C = z(1.2·[z(clo) > 0.25] + 0.8·tanh(1.5·z(speed)) + 0.9·|z(depth)| + 0.9·cos(1.5·z(betw)))`
//! - `g_P = z(1.3·tanh(z(tree)) − 0.9·[z(car) > 0.5] + 0.7·z(sky)·[z(speed) > 0]
//!   + 0.9·cos(1.5·z(building)) + 0.8·sin(2·z(person)) + 0.8·cos(1.5·z(road)))`
//! - `g_L = z(1.3·tanh(1.5·z(entropy)) + 0.6·[z(sentiment) > 0] + 0.9·|z(weibo)| + 0.8·sin(2·z(sentiment)))`
//!
//! and `y = w_C·g_C + w_P·g_P + w_L·g_L + noise_sd·ε`. Trajectory points are
//! laid so that `log1p(count / length) = 0.35 + 0.1 · y / sd(y)` up to
//! rounding of the count, which makes the standardized 30 m response an
//! affine image of `y`.
//!
//! The optional planted quarter (the low-x, low-y quadrant) scales tree cover
//! by 0.15 and sky by 0.3, triples car share, shifts sentiment down by 1.2,
//! pulls POI categories towards a single class, and multiplies population by 4.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{poi_entropy_all, LanduseCell, PoiRecord, PopulationCell, TrajectoryPoint, LANDUSE_CLASSES};
use crate::geometry::{point_at, Point, Rect};
use crate::graph::{build_graph, segment_centrality, DEFAULT_RADIUS_M, DEFAULT_SNAP_TOLERANCE_M};
use crate::real::{self, Real};
use crate::rng::{standard_normal, stream};
use crate::schema::{Column, FeatureTable, RoadSegment};

pub const STREETVIEW_CLASSES: [&str; 7] = ["road", "sky", "tree", "building", "car", "person", "sidewalk"];
pub const POI_CATEGORIES: [&str; 6] = ["food", "shopping", "leisure", "education", "health", "transit"];
const RUN_SPACING_M: f64 = 5.0;
const END_CLEARANCE_M: f64 = 35.0;
const LATERAL_M: f64 = 2.0;
const LANDUSE_CELL_M: f64 = 20.0;
const POPULATION_CELL_M: f64 = 100.0;
const ORIGIN_M: f64 = 500.0;
const DENSITY_A: f64 = 0.35;
const DENSITY_B: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub block_m: f64,
    pub irregularity: f64,
    /// Background runs laid on random segments on top of the planted counts.
    pub n_trajectories: usize,
    pub n_pois: usize,
    pub noise_sd: f64,
    pub w_c: f64,
    pub w_p: f64,
    pub w_l: f64,
    pub planted_quarter: bool,
    /// Share of `P_sky` values withheld from the attribute table.
    pub missing_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            blocks_x: 31,
            blocks_y: 31,
            block_m: 100.0,
            irregularity: 0.3,
            n_trajectories: 0,
            n_pois: 3000,
            noise_sd: 1.05,
            w_c: 1.0,
            w_p: 1.0,
            w_l: 1.0,
            planted_quarter: true,
            missing_fraction: 0.01,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks_x < 2 || self.blocks_y < 2 {
            return Err(Error::Config("synthetic city needs at least 2x2 blocks".into()));
        }
        if !(self.block_m >= 2.0 * END_CLEARANCE_M + 2.0 * RUN_SPACING_M) {
            return Err(Error::Config(format!("block_m must be >= {}", 2.0 * END_CLEARANCE_M + 2.0 * RUN_SPACING_M)));
        }
        if !(0.0..=1.0).contains(&self.irregularity) {
            return Err(Error::Config("irregularity must lie in [0, 1]".into()));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::Config("noise_sd must be >= 0".into()));
        }
        if self.w_c == 0.0 && self.w_p == 0.0 && self.w_l == 0.0 {
            return Err(Error::Config("response weights must not all be zero".into()));
        }
        if ![self.w_c, self.w_p, self.w_l].iter().all(|w| w.is_finite()) {
            return Err(Error::Config("response weights must be finite".into()));
        }
        if !(0.0..0.5).contains(&self.missing_fraction) {
            return Err(Error::Config("missing_fraction must lie in [0, 0.5)".into()));
        }
        Ok(())
    }

    pub fn extent(&self) -> Rect<f64> {
        Rect {
            min_x: ORIGIN_M,
            min_y: ORIGIN_M,
            max_x: ORIGIN_M + self.blocks_x as f64 * self.block_m,
            max_y: ORIGIN_M + self.blocks_y as f64 * self.block_m,
        }
    }

    /// The planted mismatch quadrant, if enabled.
    pub fn quarter(&self) -> Option<Rect<f64>> {
        self.planted_quarter.then(|| {
            let e = self.extent();
            Rect { min_x: e.min_x, min_y: e.min_y, max_x: (e.min_x + e.max_x) / 2.0, max_y: (e.min_y + e.max_y) / 2.0 }
        })
    }
}

/// Sum of three random plane waves with unit variance.
#[derive(Debug, Clone)]
struct Field {
    waves: [(f64, f64, f64); 3],
}

impl Field {
    fn new(seed: u64, label: &str) -> Self {
        let mut rng = stream(seed, label, 0);
        let mut wave = || {
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let k = std::f64::consts::TAU / rng.gen_range(800.0..2000.0);
            (k * theta.cos(), k * theta.sin(), rng.gen_range(0.0..std::f64::consts::TAU))
        };
        Self { waves: [wave(), wave(), wave()] }
    }

    fn at(&self, p: Point<f64>) -> f64 {
        let amp = (2.0f64 / 3.0).sqrt();
        self.waves.iter().map(|(kx, ky, ph)| amp * (kx * p.x + ky * p.y + ph).sin()).sum()
    }
}

fn inside(r: &Option<Rect<f64>>, p: Point<f64>) -> bool {
    r.is_some_and(|r| p.x >= r.min_x && p.x < r.max_x && p.y >= r.min_y && p.y < r.max_y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track<T> {
    pub id: String,
    pub points: Vec<TrajectoryPoint<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    pub g_c: Vec<T>,
    pub g_p: Vec<T>,
    pub g_l: Vec<T>,
    /// Noise-free response.
    pub signal: Vec<T>,
    /// Observed response including noise.
    pub y: Vec<T>,
    /// Planted trajectory points per segment.
    pub counts: Vec<usize>,
    /// Segment midpoint inside the planted quarter.
    pub planted: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCity<T> {
    pub config: SynthConfig,
    pub segments: Vec<RoadSegment<T>>,
    /// Supplied per-segment attributes as they would be delivered (with gaps).
    pub attributes: FeatureTable<T>,
    /// Every planted feature without gaps, including measured ones.
    pub features: FeatureTable<T>,
    pub trajectories: Vec<Track<T>>,
    pub pois: Vec<PoiRecord<T>>,
    pub landuse: Vec<LanduseCell<T>>,
    pub population: Vec<PopulationCell<T>>,
    pub truth: GroundTruth<T>,
    pub quarter: Option<Rect<T>>,
}

fn lit<T: Real>(v: f64) -> T {
    T::lit(v)
}

fn to_t<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

fn z(v: &[f64]) -> Vec<f64> {
    let mu = real::mean(v).unwrap_or(0.0);
    let sd = real::population_std(v, mu);
    if sd > 0.0 {
        v.iter().map(|x| (x - mu) / sd).collect()
    } else {
        vec![0.0; v.len()]
    }
}

fn step(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn column_f64<T: Real>(t: &FeatureTable<T>, name: &str) -> Result<Vec<f64>> {
    let c = t.column(name).ok_or_else(|| Error::Lookup { kind: "column", id: name.to_string() })?;
    if c.missing_count() > 0 {
        return Err(Error::Input(format!("oracle needs complete column {name}")));
    }
    Ok(c.values.iter().map(|v| v.to_f64_lossy()).collect())
}

/// The three planted components (g_C, g_P, g_L) from raw feature values.
pub fn planted_components<T: Real>(features: &FeatureTable<T>) -> Result<[Vec<T>; 3]> {
    let clo = z(&column_f64(features, "C_clo_800m")?);
    let speed = z(&column_f64(features, "C_free_speed")?);
    let depth = z(&column_f64(features, "C_depth_800m")?);
    let betw = z(&column_f64(features, "C_betw_800m")?);
    let person = z(&column_f64(features, "P_person")?);
    let road = z(&column_f64(features, "P_road")?);
    let tree = z(&column_f64(features, "P_tree")?);
    let car = z(&column_f64(features, "P_car")?);
    let sky = z(&column_f64(features, "P_sky")?);
    let building = z(&column_f64(features, "P_building")?);
    let ent = z(&column_f64(features, "L_poi_entropy300")?);
    let sent = z(&column_f64(features, "L_sentiment")?);
    let weibo = z(&column_f64(features, "L_total_weibo_count")?);
    let n = clo.len();
    let gc: Vec<f64> = (0..n)
        .map(|i| 1.2 * step(clo[i] > 0.25) + 0.8 * (1.5 * speed[i]).tanh() + 0.9 * depth[i].abs() + 0.9 * (1.5 * betw[i]).cos())
        .collect();
    let gp: Vec<f64> = (0..n)
        .map(|i| {
            1.3 * tree[i].tanh() - 0.9 * step(car[i] > 0.5)
                + 0.7 * sky[i] * step(speed[i] > 0.0)
                + 0.9 * (1.5 * building[i]).cos()
                + 0.8 * (2.0 * person[i]).sin()
                + 0.8 * (1.5 * road[i]).cos()
        })
        .collect();
    let gl: Vec<f64> = (0..n)
        .map(|i| 1.3 * (1.5 * ent[i]).tanh() + 0.6 * step(sent[i] > 0.0) + 0.9 * weibo[i].abs() + 0.8 * (2.0 * sent[i]).sin())
        .collect();
    Ok([to_t(&z(&gc)), to_t(&z(&gp)), to_t(&z(&gl))])
}

/// Noise-free planted response for a complete planted feature table.
pub fn oracle_response<T: Real>(features: &FeatureTable<T>, config: &SynthConfig) -> Result<Vec<T>> {
    config.validate()?;
    if features.n_rows() != config.blocks_x * (config.blocks_y + 1) + config.blocks_y * (config.blocks_x + 1) {
        return Err(Error::Input("feature table does not match the configured lattice".into()));
    }
    let [gc, gp, gl] = planted_components(features)?;
    let (wc, wp, wl) = (lit::<T>(config.w_c), lit::<T>(config.w_p), lit::<T>(config.w_l));
    Ok((0..gc.len()).map(|i| wc * gc[i] + wp * gp[i] + wl * gl[i]).collect())
}

fn lattice<T: Real>(c: &SynthConfig) -> Result<(Vec<RoadSegment<T>>, Vec<(bool, usize)>)> {
    let (nx, ny) = (c.blocks_x, c.blocks_y);
    let mut rng = stream(c.seed, "synth-nodes", 0);
    let amp = c.irregularity * c.block_m / 4.0;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let (dx, dy) = if amp > 0.0 { (rng.gen_range(-amp..=amp), rng.gen_range(-amp..=amp)) } else { (0.0, 0.0) };
            nodes.push(Point::new(ORIGIN_M + i as f64 * c.block_m + dx, ORIGIN_M + j as f64 * c.block_m + dy));
        }
    }
    let node = |i: usize, j: usize| nodes[j * (nx + 1) + i];
    let e = c.extent();
    let (mx, my) = ((e.min_x + e.max_x) / 2.0, (e.min_y + e.max_y) / 2.0);
    let district = |p: Point<f64>| match (p.x >= mx, p.y >= my) {
        (false, false) => "D1",
        (true, false) => "D2",
        (false, true) => "D3",
        (true, true) => "D4",
    };
    let mut segs = Vec::new();
    // (horizontal?, lattice line index) per segment, used for road class.
    let mut lines = Vec::new();
    let mut push = |a: Point<f64>, b: Point<f64>, horizontal: bool, line: usize| -> Result<()> {
        let mid = a.lerp(b, 0.5);
        let geom = vec![Point::new(lit(a.x), lit(a.y)), Point::new(lit(b.x), lit(b.y))];
        segs.push(RoadSegment::new(format!("s{}", segs.len()), geom, Some(district(mid).to_string()))?);
        lines.push((horizontal, line));
        Ok(())
    };
    for j in 0..=ny {
        for i in 0..nx {
            push(node(i, j), node(i + 1, j), true, j)?;
        }
    }
    for i in 0..=nx {
        for j in 0..ny {
            push(node(i, j), node(i, j + 1), false, i)?;
        }
    }
    Ok((segs, lines))
}

fn seg_f64<T: Real>(s: &RoadSegment<T>) -> (Point<f64>, Point<f64>) {
    let a = s.start();
    let b = s.end();
    (Point::new(a.x.to_f64_lossy(), a.y.to_f64_lossy()), Point::new(b.x.to_f64_lossy(), b.y.to_f64_lossy()))
}

/// Straight run of `k` points spaced 5 m inside the segment's middle zone.
fn lay_run<T: Real, R: Rng>(rng: &mut R, seg: &RoadSegment<T>, k: usize) -> Vec<TrajectoryPoint<T>> {
    let (a, b) = seg_f64(seg);
    let len = a.dist(b);
    let run = RUN_SPACING_M * (k.max(1) - 1) as f64;
    let lo = END_CLEARANCE_M;
    let hi = (len - END_CLEARANCE_M - run).max(lo);
    let s0 = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let lateral = rng.gen_range(-LATERAL_M..=LATERAL_M);
    let (ux, uy) = ((b.x - a.x) / len, (b.y - a.y) / len);
    let forward = rng.gen_bool(0.5);
    let line = [a, b];
    (0..k)
        .map(|i| {
            let s = s0 + RUN_SPACING_M * if forward { i } else { k - 1 - i } as f64;
            let p = point_at(&line, s);
            TrajectoryPoint { x: lit(p.x - uy * lateral), y: lit(p.y + ux * lateral), t: Some(lit(i as f64 * 2.0)) }
        })
        .collect()
}

fn max_run_points(len: f64) -> usize {
    (((len - 2.0 * END_CLEARANCE_M) / RUN_SPACING_M).floor() as usize + 1).max(1)
}

pub fn generate<T: Real>(config: &SynthConfig) -> Result<SynthCity<T>> {
    config.validate()?;
    let c = config;
    let seed = c.seed;
    let quarter = c.quarter();
    let (segments, lines) = lattice::<T>(c)?;
    let n = segments.len();
    let mids: Vec<Point<f64>> = segments.iter().map(|s| {
        let (a, b) = seg_f64(s);
        a.lerp(b, 0.5)
    }).collect();
    let planted: Vec<bool> = mids.iter().map(|&m| inside(&quarter, m)).collect();

    // Road attributes.
    let mut rng = stream(seed, "synth-roads", 0);
    let mut speed = Vec::with_capacity(n);
    let mut capacity = Vec::with_capacity(n);
    for &(_, line) in &lines {
        let (base, lanes) = match line % 5 {
            0 => (60.0, 3.0),
            2 => (45.0, 2.0),
            _ => (30.0, 1.0),
        };
        let v: f64 = (base + 3.0 * standard_normal(&mut rng)).max(10.0);
        speed.push(v);
        capacity.push(lanes * (800.0 + 10.0 * v));
    }

    // Street-view proportions.
    let fields: Vec<Field> = STREETVIEW_CLASSES.iter().map(|k| Field::new(seed, &format!("synth-field-P_{k}"))).collect();
    let mut rng = stream(seed, "synth-streetview", 0);
    let mut p_cols = vec![Vec::with_capacity(n); STREETVIEW_CLASSES.len()];
    for (s, &m) in mids.iter().enumerate() {
        let mut w: Vec<f64> = fields.iter().map(|f| (0.6 * f.at(m) + 0.4 * standard_normal(&mut rng)).exp()).collect();
        if planted[s] {
            w[2] *= 0.15;
            w[1] *= 0.3;
            w[4] *= 3.0;
        }
        let total: f64 = w.iter().sum();
        for (k, v) in w.iter().enumerate() {
            p_cols[k].push(v / total);
        }
    }

    // Social-media indicators.
    let f_sent = Field::new(seed, "synth-field-sentiment");
    let f_weibo = Field::new(seed, "synth-field-weibo");
    let mut rng = stream(seed, "synth-social", 0);
    let mut sentiment = Vec::with_capacity(n);
    let mut weibo = Vec::with_capacity(n);
    for (s, &m) in mids.iter().enumerate() {
        let shift = if planted[s] { -1.2 } else { 0.0 };
        sentiment.push((0.8 * f_sent.at(m) + 0.5 * standard_normal(&mut rng)).tanh() + shift);
        weibo.push((3.0 + 0.7 * f_weibo.at(m) + 0.5 * standard_normal(&mut rng)).exp().floor());
    }

    // POIs: a location-dependent mix between one dominant category and uniform.
    let e = c.extent();
    let f_mix = Field::new(seed, "synth-field-poi-mix");
    let f_dom = Field::new(seed, "synth-field-poi-dominant");
    let mut rng = stream(seed, "synth-pois", 0);
    let mut pois = Vec::with_capacity(c.n_pois);
    for _ in 0..c.n_pois {
        let p = Point::new(rng.gen_range(e.min_x..e.max_x), rng.gen_range(e.min_y..e.max_y));
        let mut mix = 1.0 / (1.0 + (-1.5 * f_mix.at(p)).exp());
        if inside(&quarter, p) {
            mix *= 0.1;
        }
        let dom = (((f_dom.at(p) + 3.0) / 6.0 * POI_CATEGORIES.len() as f64).floor() as usize).min(POI_CATEGORIES.len() - 1);
        let cat = if rng.gen_bool(mix.clamp(0.0, 1.0)) { rng.gen_range(0..POI_CATEGORIES.len()) } else { dom };
        pois.push(PoiRecord { x: lit(p.x), y: lit(p.y), category: POI_CATEGORIES[cat].to_string() });
    }

    // Land use raster.
    let lu_fields: Vec<Field> = LANDUSE_CLASSES.iter().map(|k| Field::new(seed, &format!("synth-field-lu-{k}"))).collect();
    let mut rng = stream(seed, "synth-landuse", 0);
    let mut landuse = Vec::new();
    let margin = 100.0;
    let (cols, rows) = (
        ((e.max_x - e.min_x + 2.0 * margin) / LANDUSE_CELL_M).ceil() as usize,
        ((e.max_y - e.min_y + 2.0 * margin) / LANDUSE_CELL_M).ceil() as usize,
    );
    for r in 0..rows {
        for col in 0..cols {
            let p = Point::new(
                e.min_x - margin + (col as f64 + 0.5) * LANDUSE_CELL_M,
                e.min_y - margin + (r as f64 + 0.5) * LANDUSE_CELL_M,
            );
            let best = lu_fields
                .iter()
                .map(|f| f.at(p) + 0.5 * standard_normal(&mut rng))
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (k, v)| if v > b.1 { (k, v) } else { b });
            landuse.push(LanduseCell { x: lit(p.x), y: lit(p.y), class: LANDUSE_CLASSES[best.0].to_string(), cell_size_m: lit(LANDUSE_CELL_M) });
        }
    }

    // Population raster.
    let f_pop = Field::new(seed, "synth-field-population");
    let mut rng = stream(seed, "synth-population", 0);
    let mut population = Vec::new();
    let (pc, pr) = (
        ((e.max_x - e.min_x + 2.0 * margin) / POPULATION_CELL_M).ceil() as usize,
        ((e.max_y - e.min_y + 2.0 * margin) / POPULATION_CELL_M).ceil() as usize,
    );
    for r in 0..pr {
        for col in 0..pc {
            let p = Point::new(
                e.min_x - margin + (col as f64 + 0.5) * POPULATION_CELL_M,
                e.min_y - margin + (r as f64 + 0.5) * POPULATION_CELL_M,
            );
            let mut v = 80.0 * (0.12 * f_pop.at(p) + 0.1 * standard_normal(&mut rng)).exp();
            if inside(&quarter, p) {
                v *= 4.0;
            }
            population.push(PopulationCell { x: lit(p.x), y: lit(p.y), cell_size_m: lit(POPULATION_CELL_M), population: lit(v.round()) });
        }
    }

    // Measured features.
    let (graph, _) = build_graph(&segments, lit(DEFAULT_SNAP_TOLERANCE_M))?;
    let cent = segment_centrality(&graph, lit(DEFAULT_RADIUS_M))?;
    let entropy = poi_entropy_all(&pois, &segments, lit(300.0))?;
    let (lu_cols, _) = crate::features::landuse_table(&landuse, &segments, lit(100.0))?;

    let ids: Vec<String> = segments.iter().map(|s| s.id.clone()).collect();
    let mut features = FeatureTable::new(ids.clone());
    features.push(Column::complete("C_deg_800m", cent.iter().map(|m| m.degree).collect()))?;
    features.push(Column::complete("C_clo_800m", cent.iter().map(|m| m.closeness).collect()))?;
    features.push(Column::complete("C_betw_800m", cent.iter().map(|m| m.betweenness).collect()))?;
    features.push(Column::complete("C_depth_800m", cent.iter().map(|m| m.depth).collect()))?;
    let mut attributes = FeatureTable::new(ids);
    let supplied: Vec<(String, Vec<f64>)> = [("C_free_speed".to_string(), speed), ("C_capacity".to_string(), capacity)]
        .into_iter()
        .chain(STREETVIEW_CLASSES.iter().zip(p_cols).map(|(k, v)| (format!("P_{k}"), v)))
        .chain([("L_sentiment".to_string(), sentiment), ("L_total_weibo_count".to_string(), weibo)])
        .collect();
    let mut rng = stream(seed, "synth-missing", 0);
    for (name, v) in &supplied {
        features.push(Column::complete(name.clone(), to_t(v)))?;
        if name == "P_sky" && c.missing_fraction > 0.0 {
            let vals: Vec<Option<T>> = v.iter().map(|&x| (!rng.gen_bool(c.missing_fraction)).then(|| lit(x))).collect();
            attributes.push(Column::with_missing(name.clone(), vals))?;
        } else {
            attributes.push(Column::complete(name.clone(), to_t(v)))?;
        }
    }
    for col in lu_cols {
        features.push(col)?;
    }
    features.push(Column::complete("L_poi_entropy300", entropy.iter().map(|e| e.entropy).collect()))?;

    // Response and the trajectories that carry it.
    let [g_c, g_p, g_l] = planted_components(&features)?;
    let signal = oracle_response(&features, c)?;
    let mut rng = stream(seed, "synth-noise", 0);
    let y: Vec<f64> = signal.iter().map(|s| s.to_f64_lossy() + c.noise_sd * standard_normal(&mut rng)).collect();
    let sd_y = real::population_std(&y, real::mean(&y).unwrap_or(0.0)).max(f64::MIN_POSITIVE);
    let mut trajectories = Vec::new();
    let mut counts = Vec::with_capacity(n);
    for (s, seg) in segments.iter().enumerate() {
        let len = seg.length_m.to_f64_lossy();
        let density = (DENSITY_A + DENSITY_B * y[s] / sd_y).exp_m1().max(0.0);
        let total = (density * len).round() as usize;
        counts.push(total);
        let mut rng = stream(seed, "synth-runs", s as u64);
        let cap = max_run_points(len);
        let mut left = total;
        while left > 0 {
            let mut k = left.min(rng.gen_range(2..=cap.max(2)));
            if left - k == 1 {
                k = if k > 2 { k - 1 } else { left };
            }
            trajectories.push(Track { id: format!("t{}", trajectories.len()), points: lay_run(&mut rng, seg, k) });
            left -= k;
        }
    }
    let mut rng = stream(seed, "synth-background", 0);
    for _ in 0..c.n_trajectories {
        let s = rng.gen_range(0..n);
        let k = rng.gen_range(1..=max_run_points(segments[s].length_m.to_f64_lossy()));
        trajectories.push(Track { id: format!("t{}", trajectories.len()), points: lay_run(&mut rng, &segments[s], k) });
    }

    let quarter = quarter.map(|q| Rect { min_x: lit(q.min_x), min_y: lit(q.min_y), max_x: lit(q.max_x), max_y: lit(q.max_y) });
    Ok(SynthCity {
        config: c.clone(),
        segments,
        attributes,
        features,
        trajectories,
        pois,
        landuse,
        population,
        truth: GroundTruth { g_c, g_p, g_l, signal, y: to_t(&y), counts, planted },
        quarter,
    })
}
