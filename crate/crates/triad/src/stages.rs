use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use triad_core::features::aggregate_grid;
use triad_core::intervention::{format_table, scenario_grid, SimulationContext};
use triad_core::io;
use triad_core::lisa::{bivariate_lisa, grid_weights, mismatch_zones, Cluster};
use triad_core::pipeline::{build_features, FeatureConfig, RawInputs};
use triad_core::regressors::{
    cross_validate, fit_gbdt, random_search, write_model, CvReport, GbdtModel, ModelSpec, Regressor,
};
use triad_core::schema::{validate_dataset, Column, Dimension, FeatureTable, Issue, RoadSegment, TriadSchema};
use triad_core::shap::{dependence_table, group_shap, tree_shap, ShapMatrix};
use triad_core::typology::{classify_by_region, deprivation_scores, Typology, CITYWIDE};
use triad_core::{graph, synth, Matrix};

use crate::config::PipelineConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Ingest,
    Graph,
    Features,
    Train,
    Explain,
    Classify,
    Mismatch,
    Simulate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Synth,
        Stage::Ingest,
        Stage::Graph,
        Stage::Features,
        Stage::Train,
        Stage::Explain,
        Stage::Classify,
        Stage::Mismatch,
        Stage::Simulate,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Graph => "graph",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Explain => "explain",
            Stage::Classify => "classify",
            Stage::Mismatch => "mismatch",
            Stage::Simulate => "simulate",
            Stage::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }

    /// Stages run by `--stage all`; `synth` only when inputs are synthetic.
    pub fn pipeline(cfg: &PipelineConfig) -> Vec<Stage> {
        Self::ALL.into_iter().filter(|s| *s != Stage::Synth || cfg.inputs.is_synthetic()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub seed: u64,
    pub params: serde_json::Value,
    /// Path to SHA-256 of every file read.
    pub inputs: BTreeMap<String, String>,
    /// Path to SHA-256 of every file written, this manifest excluded.
    pub outputs: BTreeMap<String, String>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Same content ignoring wall time.
    pub fn same_artifacts(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.wall_time_s = other.wall_time_s;
        &a == other
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads and writes of one stage, hashed for its manifest.
struct StageIo<'a> {
    cfg: &'a PipelineConfig,
    stage: Stage,
    dir: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> StageIo<'a> {
    fn new(cfg: &'a PipelineConfig, stage: Stage) -> Self {
        Self { cfg, stage, dir: cfg.run_dir.join(stage.as_str()), inputs: BTreeMap::new(), outputs: BTreeMap::new() }
    }

    fn key(&self, path: &Path) -> String {
        path.strip_prefix(&self.cfg.run_dir).unwrap_or(path).to_string_lossy().replace('\\', "/")
    }

    fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let text = io::read_text(path).map_err(|e| CliError::Runtime(e.into()))?;
        self.inputs.insert(self.key(path), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.join(name);
        io::write_text(&p, text)?;
        self.outputs.insert(self.key(&p), sha256_hex(text.as_bytes()));
        Ok(p)
    }

    fn record_output(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        self.outputs.insert(self.key(path), sha256_hex(&bytes));
        Ok(())
    }

    /// Artifact of an upstream stage; its absence is a dependency error.
    fn upstream(&mut self, stage: Stage, name: &str) -> Result<(PathBuf, String), CliError> {
        let p = self.cfg.run_dir.join(stage.as_str()).join(name);
        if !p.is_file() {
            return Err(CliError::Dependency {
                stage: self.stage.as_str().into(),
                missing: format!("{}/{name}", stage.as_str()),
                run_first: stage.as_str().into(),
            });
        }
        let text = self.read(&p)?;
        Ok((p, text))
    }

    /// Upstream stage must have completed; nothing is read.
    fn require(&self, stage: Stage) -> Result<(), CliError> {
        if self.cfg.run_dir.join(stage.as_str()).join("manifest.json").is_file() {
            return Ok(());
        }
        Err(CliError::Dependency {
            stage: self.stage.as_str().into(),
            missing: format!("{}/manifest.json", stage.as_str()),
            run_first: stage.as_str().into(),
        })
    }

    /// Configured raw input, or the synthetic stand-in.
    fn input(&mut self, key: &str, configured: &Option<PathBuf>, synth_name: &str) -> Result<(PathBuf, String), CliError> {
        match configured {
            Some(p) => {
                if !p.is_file() {
                    return Err(CliError::config(&format!("inputs.{key}"), format!("file {} not found", p.display())));
                }
                let text = self.read(p)?;
                Ok((p.clone(), text))
            }
            None if self.cfg.inputs.is_synthetic() => self.upstream(Stage::Synth, synth_name),
            None => Err(CliError::config(&format!("inputs.{key}"), "required when inputs.segments is set".into())),
        }
    }

    /// Optional raw input; unset when the user supplied real segments without it.
    fn optional_input(&mut self, key: &str, configured: &Option<PathBuf>, synth_name: &str) -> Result<Option<(PathBuf, String)>, CliError> {
        if configured.is_none() && !self.cfg.inputs.is_synthetic() {
            return Ok(None);
        }
        self.input(key, configured, synth_name).map(Some)
    }

    fn finish(self, params: serde_json::Value, started: Instant) -> Result<Manifest, CliError> {
        let m = Manifest {
            stage: self.stage.as_str().into(),
            seed: self.cfg.seed,
            params,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&m).context("serializing manifest")? + "\n";
        io::write_text(&self.dir.join("manifest.json"), &text)?;
        Ok(m)
    }
}

fn rt<T>(r: triad_core::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::from)
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config sections serialize")
}

pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<Manifest, CliError> {
    let started = Instant::now();
    info!("stage {} starting", stage.as_str());
    let mut sio = StageIo::new(cfg, stage);
    let params = match stage {
        Stage::Synth => synth_stage(&mut sio)?,
        Stage::Ingest => ingest_stage(&mut sio)?,
        Stage::Graph => graph_stage(&mut sio)?,
        Stage::Features => features_stage(&mut sio)?,
        Stage::Train => train_stage(&mut sio)?,
        Stage::Explain => explain_stage(&mut sio)?,
        Stage::Classify => classify_stage(&mut sio)?,
        Stage::Mismatch => mismatch_stage(&mut sio)?,
        Stage::Simulate => simulate_stage(&mut sio)?,
        Stage::Report => report_stage(&mut sio)?,
    };
    let m = sio.finish(params, started)?;
    info!("stage {} done in {:.2} s", stage.as_str(), m.wall_time_s);
    Ok(m)
}

fn synth_stage(sio: &mut StageIo<'_>) -> Result<serde_json::Value, CliError> {
    let cfg = sio.cfg;
    let sc = cfg.synth.to_core(cfg.seed);
    let city: synth::SynthCity<f64> = rt(synth::generate(&sc))?;
    for p in rt(io::write_synth_city(&city, &sio.dir))? {
        sio.record_output(&p)?;
    }
    let mut s = String::from("## Synthetic city\n\n");
    let planted = city.truth.planted.iter().filter(|&&p| p).count();
    let _ = writeln!(s, "- segments: {}", city.segments.len());
    let _ = writeln!(s, "- trajectories: {}", city.trajectories.len());
    let _ = writeln!(s, "- POIs: {}", city.pois.len());
    let _ = writeln!(s, "- segments in the planted quarter: {planted}");
    sio.write("summary.md", &s)?;
    Ok(json(&cfg.synth))
}

struct Loaded {
    segments: Vec<RoadSegment<f64>>,
    attributes: Option<FeatureTable<f64>>,
}

fn load_segments(sio: &mut StageIo<'_>) -> Result<Loaded, CliError> {
    let inputs = sio.cfg.inputs.clone();
    let (sp, stext) = sio.input("segments", &inputs.segments, "segments.geojson")?;
    let segments = if sp.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        rt(io::parse_segments_csv(&stext, &sp))?
    } else {
        rt(io::parse_segments_geojson(&stext, &sp))?
    };
    let attributes = match sio.optional_input("attributes", &inputs.attributes, "attributes.csv")? {
        Some((p, text)) => Some(rt(io::parse_feature_table(&text, &p, None))?),
        None => None,
    };
    Ok(Loaded { segments, attributes })
}

fn ingest_stage(sio: &mut StageIo<'_>) -> Result<serde_json::Value, CliError> {
    let inputs = sio.cfg.inputs.clone();
    let loaded = load_segments(sio)?;
    let (tp, ttext) = sio.input("trajectories", &inputs.trajectories, "trajectories.csv")?;
    let tracks = rt(io::parse_trajectories::<f64>(&ttext, &tp))?;
    let pois = match sio.optional_input("pois", &inputs.pois, "pois.csv")? {
        Some((p, t)) => rt(io::parse_pois::<f64>(&t, &p))?.len(),
        None => 0,
    };
    let landuse = match sio.optional_input("landuse", &inputs.landuse, "landuse.csv")? {
        Some((p, t)) => rt(io::parse_landuse::<f64>(&t, &p))?.len(),
        None => 0,
    };
    let population = match sio.optional_input("population", &inputs.population, "population.csv")? {
        Some((p, t)) => rt(io::parse_population::<f64>(&t, &p))?.len(),
        None => 0,
    };
    let mut report = String::new();
    let mut fatal = Vec::new();
    if let Some(a) = &loaded.attributes {
        for issue in validate_dataset(a, &loaded.segments, &TriadSchema::default()).issues {
            let _ = writeln!(report, "{issue}");
            if !matches!(issue, Issue::MissingCells { .. }) {
                fatal.push(issue.to_string());
            }
        }
    }
    if report.is_empty() {
        report.push_str("no issues\n");
    }
    sio.write("validation.txt", &report)?;
    if !fatal.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!("input validation failed: {}", fatal.join("; "))));
    }
    let points: usize = tracks.iter().map(Vec::len).sum();
    let mut s = String::from("## Inputs\n\n");
    let _ = writeln!(s, "- segments: {}", loaded.segments.len());
    let _ = writeln!(s, "- attribute columns: {}", loaded.attributes.as_ref().map_or(0, |a| a.columns.len()));
    let _ = writeln!(s, "- trajectories: {} ({points} points)", tracks.len());
    let _ = writeln!(s, "- POIs: {pois}");
    let _ = writeln!(s, "- land-use cells: {landuse}");
    let _ = writeln!(s, "- population cells: {population}");
    sio.write("summary.md", &s)?;
    Ok(json(&sio.cfg.inputs))
}

fn graph_stage(sio: &mut StageIo<'_>) -> Result<serde_json::Value, CliError> {
    sio.require(Stage::Ingest)?;
    let g = sio.cfg.graph.clone();
    let loaded = load_segments(sio)?;
    let (street, warnings) = rt(graph::build_graph(&loaded.segments, g.snap_tolerance_m))?;
    let cent = rt(graph::segment_centrality(&street, g.radius_m))?;
    let ids: Vec<String> = loaded.segments.iter().map(|s| s.id.clone()).collect();
    sio.write("centrality.csv", &io::write_centrality(&ids, &cent, g.radius_m))?;
    let mut w = String::new();
    for warning in &warnings {
        let _ = writeln!(w, "{warning:?}");
    }
    sio.write("warnings.txt", &w)?;
    let mut s = String::from("## Street graph\n\n");
    let _ = writeln!(s, "- nodes: {}", street.nodes.len());
    let _ = writeln!(s, "- edges: {}", street.edges.len());
    let _ = writeln!(s, "- connected components: {}", street.components().len());
    let _ = writeln!(s, "- warnings: {}", warnings.len());
    sio.write("summary.md", &s)?;
    Ok(json(&g))
}

fn feature_config(cfg: &PipelineConfig) -> Result<FeatureConfig<f64>, CliError> {
    cfg.features.to_core(&cfg.graph)
}

fn features_stage(sio: &mut StageIo<'_>) -> Result<serde_json::Value, CliError> {
    sio.require(Stage::Ingest)?;
    let cfg = sio.cfg;
    let inputs = cfg.inputs.clone();
    let fc = feature_config(cfg)?;
    let loaded = load_segments(sio)?;
    let (tp, ttext) = sio.input("trajectories", &inputs.trajectories, "trajectories.csv")?;
    let tracks = rt(io::parse_trajectories::<f64>(&ttext, &tp))?;
    let pois = match sio.optional_input("pois", &inputs.pois, "pois.csv")? {
        Some((p, t)) => rt(io::parse_pois::<f64>(&t, &p))?,
        None => Vec::new(),
    };
    let landuse = match sio.optional_input("landuse", &inputs.landuse, "landuse.csv")? {
        Some((p, t)) => rt(io::parse_landuse::<f64>(&t, &p))?,
        None => Vec::new(),
    };
    let fb = rt(build_features(
        RawInputs {
            segments: &loaded.segments,
            attributes: loaded.attributes.as_ref(),
            tracks: &tracks,
            pois: &pois,
            landuse: &landuse,
        },
        &fc,
    ))?;
    sio.write("features.csv", &io::write_feature_table(&fb.table))?;
    sio.write("features_raw.csv", &io::write_feature_table(&fb.raw))?;
    sio.write("norm_params.csv", &io::write_norm_params(&fb.params))?;
    let mut density = FeatureTable::new(fb.table.segment_ids.clone());
    for (k, &r) in fb.density.radii.iter().enumerate() {
        let tag = r.round() as i64;
        rt(density.push(Column::complete(format!("count_{tag}m"), fb.density.counts[k].iter().map(|&c| c as f64).collect())))?;
        rt(density.push(Column::complete(format!("density_{tag}m"), fb.density.density[k].clone())))?;
    }
    for z in &fb.densities {
        rt(density.push(z.clone()))?;
    }
    sio.write("density.csv", &io::write_feature_table(&density))?;
    let mut s = String::from("## Features\n\n");
    let _ = writeln!(s, "- model features: {}", fb.features.len());
    let _ = writeln!(s, "- response: {}", fb.response);
    let _ = writeln!(s, "- interpolated cells: {}", fb.interpolated_cells);
    let schema = TriadSchema::default();
    for d in Dimension::ALL {
        let names: Vec<&str> = fb.features.iter().filter(|n| schema.classify(n).ok() == Some(d)).map(String::as_str).collect();
        let _ = writeln!(s, "- {d} ({}): {}", names.len(), names.join(", "));
    }
    sio.write("summary.md", &s)?;
    Ok(json(&cfg.features))
}

struct Dataset {
    table: FeatureTable<f64>,
    names: Vec<String>,
    x: Matrix,
    y: Vec<f64>,
}

fn load_dataset(sio: &mut StageIo<'_>) -> Result<Dataset, CliError> {
    let (fp, ftext) = sio.upstream(Stage::Features, "features.csv")?;
    let response = sio.cfg.features.response.clone();
    let table = rt(io::parse_feature_table::<f64>(&ftext, &fp, Some(&response)))?;
    let names = table.feature_names();
    let x = rt(table.matrix(&names))?;
    let y = rt(table.response_values())?.to_vec();
    Ok(Dataset { table, names, x, y })
}

fn load_trained(sio: &mut StageIo<'_>) -> Result<GbdtModel<f64>, CliError> {
    let (mp, mtext) = sio.upstream(Stage::Train, "model.txt")?;
    rt(triad_core::regressors::read_model(&mtext, &mp))
}

fn cv_line(name: &str, r: &CvReport<f64>) -> String {
    format!("{name},{},{},{},{}\n", r.r2_mean, r.r2_std, r.rmse_mean, r.rmse_std)
}

fn train_stage(sio: &mut StageIo<'_>) -> Result<serde_json::Value, CliError> {
    let cfg = sio.cfg;
    let t = cfg.train.clone();
    let ds = load_dataset(sio)?;
    let seed = cfg.seed;
    let (best, gbdt_cv, search_log) = if t.n_draws > 0 {
        let space = t.search.to_core(&t.gbdt);
        let res = rt(random_search(&ds.x, &ds.y, &space, t.n_draws, t.k_folds, seed))?;
        let mut log = String::from("draw,grid_index,max_depth,learning_rate,subsample,colsample_bytree,gamma,n_estimators,r2_mean,r2_std,rmse_mean,rmse_std\n");
        for e in &res.log {
            let p = &e.params;
            let _ = writeln!(
                log,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                e.draw, e.grid_index, p.max_depth, p.learning_rate, p.subsample, p.colsample_bytree, p.gamma, p.n_estimators,
                e.report.r2_mean, e.report.r2_std, e.report.rmse_mean, e.report.rmse_std
            );
        }
        let cv = res.log[res.best_draw].report.clone();
        (res.best, cv, Some(log))
    } else {
        let hp = t.gbdt.to_core(seed);
        let cv = rt(cross_validate(&ds.x, &ds.y, &ModelSpec::Gbdt(hp.clone()), t.k_folds, seed))?;
        (hp, cv, None)
    };
    let rf = rt(cross_validate(&ds.x, &ds.y, &ModelSpec::Forest(t.forest.to_core(seed)?), t.k_folds, seed))?;
    let ols = rt(cross_validate(&ds.x, &ds.y, &ModelSpec::<f64>::Ols, t.k_folds, seed))?;
    let model = rt(fit_gbdt(&ds.x, &ds.y, &best))?;
    let model = rt(model.with_feature_names(ds.names.clone()))?;
    sio.write("model.txt", &rt(write_model(&model))?)?;
    let mut report = String::from("model,r2_mean,r2_std,rmse_mean,rmse_std\n");
    report.push_str(&cv_line("ols", &ols));
    report.push_str(&cv_line("random_forest", &rf));
    report.push_str(&cv_line("gbdt", &gbdt_cv));
    sio.write("cv_report.csv", &report)?;
    if let Some(log) = search_log {
        sio.write("search_log.csv", &log)?;
    }
    let mut s = String::from("## Model performance\n\n");
    let _ = writeln!(s, "{}-fold cross-validation, seed {seed}.\n", t.k_folds);
    s.push_str("| model | R² | RMSE |\n|---|---|---|\n");
    for (name, r) in [("OLS", &ols), ("Random forest", &rf), ("GBDT", &gbdt_cv)] {
        let _ = writeln!(s, "| {name} | {:.4} ± {:.4} | {:.4} ± {:.4} |", r.r2_mean, r.r2_std, r.rmse_mean, r.rmse_std);
    }
    let _ = writeln!(
        s,
        "\nGBDT hyperparameters: n_estimators {}, max_depth {}, learning_rate {}, subsample {}, colsample_bytree {}, gamma {}.",
        best.n_estimators, best.max_depth, best.learning_rate, best.subsample, best.colsample_bytree, best.gamma
    );
    sio.write("summary.md", &s)?;
    Ok(json(&t))
}

fn schema(cfg: &PipelineConfig) -> TriadSchema {
    if cfg.explain.merge_o_into_c {
        TriadSchema::merged()
    } else {
        TriadSchema::default()
    }
}

fn explain_stage(sio: &mut StageIo<'_>) -> Result<serde_json::Value, CliError> {
    let cfg = sio.cfg;
    let model = load_trained(sio)?;
    let ds = load_dataset(sio)?;
    if model.feature_names != ds.names {
        return Err(CliError::Runtime(anyhow::anyhow!("model features differ from features.csv; rerun train")));
    }
    let shap = rt(tree_shap(&model, &ds.x))?;
    let raw_groups = rt(group_shap(&shap, &TriadSchema::default()))?;
    sio.write("shap.csv", &io::write_shap(&ds.table.segment_ids, &shap, &raw_groups))?;
    let groups = rt(group_shap(&shap, &schema(cfg)))?;
    let mut shares = String::from("dimension,share\n");
    let dims: Vec<Dimension> = if cfg.explain.merge_o_into_c {
        vec![Dimension::C, Dimension::P, Dimension::L]
    } else {
        Dimension::ALL.to_vec()
    };
    for &d in &dims {
        let _ = writeln!(shares, "{d},{}", groups.share(d));
    }
    sio.write("shares.csv", &shares)?;
    let mut dep = String::from("feature,value,shap\n");
    for n in &ds.names {
        for (v, phi) in rt(dependence_table(&shap, &ds.x, n))? {
            let _ = writeln!(dep, "{n},{v},{phi}");
        }
    }
    sio.write("dependence.csv", &dep)?;
    let mut s = String::from("## Group contributions\n\n");
    s.push_str("Share of total mean |SHAP| by dimension.\n\n| dimension | share |\n|---|---|\n");
    for &d in &dims {
        let _ = writeln!(s, "| {d} | {:.1}% |", 100.0 * groups.share(d));
    }
    let mut ranked: Vec<(String, f64)> = (0..ds.names.len())
        .map(|j| {
            let mean_abs = (0..shap.values.rows()).map(|r| shap.values.get(r, j).abs()).sum::<f64>() / shap.values.rows() as f64;
            (ds.names[j].clone(), mean_abs)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    s.push_str("\nTop features by mean |SHAP|:\n\n");
    for (n, v) in ranked.iter().take(10) {
        let _ = writeln!(s, "- {n}: {v:.4}");
    }
    let _ = writeln!(s, "\nBase value: {:.6}", shap.base_value);
    sio.write("summary.md", &s)?;
    Ok(json(&cfg.explain))
}

fn load_shap(sio: &mut StageIo<'_>, ids: &[String]) -> Result<ShapMatrix<f64>, CliError> {
    let (p, text) = sio.upstream(Stage::Explain, "shap.csv")?;
    let (shap_ids, shap) = rt(io::parse_shap::<f64>(&text, &p))?;
    if shap_ids != ids {
        return Err(CliError::Runtime(anyhow::anyhow!("shap.csv rows differ from features.csv; rerun explain")));
    }
    Ok(shap)
}

fn classify_stage(sio: &mut StageIo<'_>) -> Result<serde_json::Value, CliError> {
    let cfg = sio.cfg;
    let c = cfg.classify.clone();
    let ids = load_dataset(sio)?.table.segment_ids;
    let shap = load_shap(sio, &ids)?;
    let loaded = load_segments(sio)?;
    let groups = rt(group_shap(&shap, &TriadSchema::default()))?;
    let scores = deprivation_scores(&groups, c.mode()?);
    let district: BTreeMap<&str, Option<&str>> = loaded.segments.iter().map(|s| (s.id.as_str(), s.district.as_deref())).collect();
    let regions: Vec<String> = ids
        .iter()
        .map(|id| match (c.by_district, district.get(id.as_str()).copied().flatten()) {
            (true, Some(d)) => d.to_string(),
            _ => CITYWIDE.to_string(),
        })
        .collect();
    let result = rt(classify_by_region(&scores, &regions, c.quantile))?;
    sio.write("typology.csv", &io::write_typology(&ids, &result))?;
    let counts = result.counts();
    let mut cs = String::from("label,count\n");
    for (l, n) in &counts {
        let _ = writeln!(cs, "{l},{n}");
    }
    sio.write("typology_counts.csv", &cs)?;
    let mut th = String::from("region,D_C,D_P,D_L\n");
    for (r, [a, b, d]) in &result.thresholds {
        let _ = writeln!(th, "{r},{a},{b},{d}");
    }
    sio.write("thresholds.csv", &th)?;
    let mut s = String::from("## Deprivation typology\n\n");
    let _ = writeln!(s, "Quantile {}, mode {}, {} region(s).\n", c.quantile, c.mode, result.thresholds.len());
    s.push_str("| label | segments | share |\n|---|---|---|\n");
    let n = ids.len().max(1) as f64;
    for (l, k) in &counts {
        let _ = writeln!(s, "| {l} | {k} | {:.1}% |", 100.0 * *k as f64 / n);
    }
    sio.write("summary.md", &s)?;
    Ok(json(&c))
}

fn mismatch_stage(sio: &mut StageIo<'_>) -> Result<serde_json::Value, CliError> {
    let cfg = sio.cfg;
    let m = cfg.mismatch.clone();
    let (tp, ttext) = sio.upstream(Stage::Classify, "typology.csv")?;
    let typology = rt(io::parse_typology::<f64>(&ttext, &tp))?;
    let model = load_trained(sio)?;
    let ds = load_dataset(sio)?;
    let loaded = load_segments(sio)?;
    let inputs = cfg.inputs.clone();
    let (pp, ptext) = sio.input("population", &inputs.population, "population.csv")?;
    let population = rt(io::parse_population::<f64>(&ptext, &pp))?;

    let by_id: BTreeMap<&str, usize> = ds.table.segment_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let order: Vec<usize> = loaded
        .segments
        .iter()
        .map(|s| by_id.get(s.id.as_str()).copied().ok_or_else(|| anyhow::anyhow!("segment `{}` missing from features.csv", s.id)))
        .collect::<anyhow::Result<_>>()?;
    let pred = model.predict(&ds.x);
    let supply: Vec<f64> = order.iter().map(|&i| pred[i]).collect();
    let label_of: BTreeMap<&str, Typology> = typology.iter().map(|(id, _, l)| (id.as_str(), *l)).collect();
    let labels: Vec<Typology> = loaded
        .segments
        .iter()
        .map(|s| label_of.get(s.id.as_str()).copied().ok_or_else(|| anyhow::anyhow!("segment `{}` missing from typology.csv", s.id)))
        .collect::<anyhow::Result<_>>()?;

    let mut table = FeatureTable::new(loaded.segments.iter().map(|s| s.id.clone()).collect());
    rt(table.push(Column::complete("supply", supply.clone())))?;
    let grid = rt(aggregate_grid(&loaded.segments, &table, &population, m.cell_size_m))?;
    let (w, kept) = rt(grid_weights(&grid.cells, m.contiguity()?))?;
    let cell_supply = grid.length_weighted(&supply);
    let xs: Vec<f64> = kept.iter().map(|&i| grid.cells[i].population).collect();
    let ys: Vec<f64> = kept.iter().map(|&i| cell_supply[i].expect("kept cells have supply")).collect();
    let lisa = rt(bivariate_lisa(&xs, &ys, &w, &m.lisa(cfg.seed)))?;
    let mut pos = vec![usize::MAX; grid.cells.len()];
    for (k, &i) in kept.iter().enumerate() {
        pos[i] = k;
    }
    let segment_cells: Vec<Vec<usize>> = (0..loaded.segments.len())
        .map(|s| grid.cells_of_segment(s).map(|c| pos[c]).filter(|&k| k != usize::MAX).collect())
        .collect();
    let target = m.target()?;
    let report = rt(mismatch_zones(&lisa, &w, &labels, &segment_cells, target))?;

    let cells: Vec<_> = kept.iter().map(|&i| &grid.cells[i]).collect();
    sio.write("lisa.csv", &io::write_lisa(&cells, &lisa))?;
    let mut g = String::from("cell_id,row,col,population,supply,has_supply\n");
    for (i, c) in grid.cells.iter().enumerate() {
        let sup = cell_supply[i].map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(g, "{},{},{},{},{sup},{}", c.id, c.row, c.col, c.population, u8::from(c.has_supply));
    }
    sio.write("grid.csv", &g)?;
    let mut ct = String::from("cluster,label,segments\n");
    for ((c, l), n) in &report.crosstab {
        let _ = writeln!(ct, "{c},{l},{n}");
    }
    sio.write("crosstab.csv", &ct)?;
    let mut zs = String::from("zone,cells,segments,cell_ids\n");
    let mut zseg = String::from("segment_id,zone\n");
    for (z, zone) in report.zones.iter().enumerate() {
        let ids: Vec<&str> = zone.cells.iter().map(|&k| cells[k].id.as_str()).collect();
        let _ = writeln!(zs, "{z},{},{},{}", zone.cells.len(), zone.segments.len(), ids.join(";"));
        for &s in &zone.segments {
            let _ = writeln!(zseg, "{},{z}", loaded.segments[s].id);
        }
    }
    sio.write("zones.csv", &zs)?;
    sio.write("zone_segments.csv", &zseg)?;

    let mut s = String::from("## Spatial mismatch\n\n");
    let _ = writeln!(
        s,
        "Bivariate LISA of population against predicted supply on {} cells of {} m, {} permutations, α = {}.\n",
        kept.len(),
        m.cell_size_m,
        m.permutations,
        m.alpha
    );
    let _ = writeln!(s, "Global bivariate Moran's I: {:.4}\n", lisa.global_i());
    s.push_str("| cluster | cells |\n|---|---|\n");
    for c in Cluster::ALL {
        let _ = writeln!(s, "| {c} | {} |", lisa.cells_in(c).len());
    }
    let _ = writeln!(s, "\n{} {target} zone(s) covering {} segments.\n", report.zones.len(), report.target_segments().len());
    s.push_str("Segments by cell cluster and typology label:\n\n| cluster |");
    for l in Typology::ALL {
        let _ = write!(s, " {l} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(Typology::ALL.len()));
    s.push('\n');
    for c in Cluster::ALL {
        let _ = write!(s, "| {c} |");
        for l in Typology::ALL {
            let _ = write!(s, " {} |", report.crosstab.get(&(c, l)).copied().unwrap_or(0));
        }
        s.push('\n');
    }
    sio.write("summary.md", &s)?;
    Ok(json(&m))
}

fn simulate_stage(sio: &mut StageIo<'_>) -> Result<serde_json::Value, CliError> {
    let cfg = sio.cfg;
    let scenarios = cfg.simulate.to_core()?;
    let (zp, ztext) = sio.upstream(Stage::Mismatch, "zone_segments.csv")?;
    let zone_table = rt(io::CsvTable::parse(&ztext, &zp))?;
    let model = load_trained(sio)?;
    let ds = load_dataset(sio)?;
    let shap = load_shap(sio, &ds.table.segment_ids)?;
    let (np, ntext) = sio.upstream(Stage::Features, "norm_params.csv")?;
    let params = rt(io::parse_norm_params::<f64>(&ntext, &np))?;
    let response = params
        .get(&cfg.features.response)
        .ok_or_else(|| anyhow::anyhow!("norm_params.csv has no entry for `{}`", cfg.features.response))?
        .clone();
    let rows = ds.table.row_index();
    let col = rt(zone_table.require("segment_id"))?;
    let mut zone: Vec<usize> = zone_table
        .rows
        .iter()
        .map(|(_, r)| rows.get(r[col].as_str()).copied().ok_or_else(|| anyhow::anyhow!("zone segment `{}` not in features.csv", r[col])))
        .collect::<anyhow::Result<_>>()?;
    zone.sort_unstable();
    zone.dedup();
    let dims = ds.names.iter().map(|n| TriadSchema::default().classify(n)).collect::<triad_core::Result<Vec<_>>>();
    let dims = rt(dims)?;
    let ctx = SimulationContext { model: &model, x: &ds.x, shap: &shap, feature_dims: &dims, response: &response, zone: &zone };
    let grid = scenario_grid(&ctx, &scenarios);
    sio.write("scenarios.csv", &format_table(&grid))?;
    let mut applied = String::from("scenario,intensity,feature,dimension,mean_abs_phi,direction,sigma,delta,zero_impact\n");
    for row in &grid {
        if let Ok(rep) = &row.outcome {
            for a in &rep.applied {
                let _ = writeln!(
                    applied,
                    "{},{},{},{},{},{},{},{},{}",
                    row.scenario.label(),
                    row.scenario.intensity,
                    a.feature,
                    a.dimension,
                    a.mean_abs_phi,
                    a.direction,
                    a.sigma,
                    a.delta,
                    u8::from(a.zero_impact)
                );
            }
        }
    }
    sio.write("applied.csv", &applied)?;
    let mut s = String::from("## Intervention scenarios\n\n");
    let _ = writeln!(s, "Zone of {} segments; model-based what-if, not a causal estimate.\n", zone.len());
    s.push_str("| type | intensity | variables per dimension | improvement | model-scale Δ |\n|---|---|---|---|---|\n");
    for row in &grid {
        let sc = &row.scenario;
        match &row.outcome {
            Ok(r) => {
                let unit = if r.degenerate_baseline { " (abs)" } else { "%" };
                let _ = writeln!(
                    s,
                    "| {} | {:.0}% | {} | {:.2}{unit} | {:.4} |",
                    sc.label(),
                    sc.intensity * 100.0,
                    sc.top_k,
                    r.improvement_pct,
                    r.model_scale_delta
                );
            }
            Err(e) => {
                let _ = writeln!(s, "| {} | {:.0}% | {} | error: {e} | |", sc.label(), sc.intensity * 100.0, sc.top_k);
            }
        }
    }
    sio.write("summary.md", &s)?;
    Ok(json(&cfg.simulate))
}

const REPORT_ORDER: [Stage; 9] = [
    Stage::Synth,
    Stage::Ingest,
    Stage::Graph,
    Stage::Features,
    Stage::Train,
    Stage::Explain,
    Stage::Classify,
    Stage::Mismatch,
    Stage::Simulate,
];

fn report_stage(sio: &mut StageIo<'_>) -> Result<serde_json::Value, CliError> {
    let cfg = sio.cfg;
    let mut doc = String::from("# Exercise-supportiveness pipeline report\n\n");
    let _ = writeln!(doc, "Seed {}.\n", cfg.seed);
    for st in REPORT_ORDER {
        let required = matches!(st, Stage::Train | Stage::Explain | Stage::Classify | Stage::Mismatch | Stage::Simulate);
        let path = cfg.run_dir.join(st.as_str()).join("summary.md");
        if !path.is_file() {
            if required {
                sio.upstream(st, "summary.md")?;
            }
            continue;
        }
        let (_, text) = sio.upstream(st, "summary.md")?;
        doc.push_str(&text);
        doc.push('\n');
    }
    sio.write("report.md", &doc)?;
    Ok(serde_json::json!({}))
}

/// Runs `stages` in order, stopping at the first failure.
pub fn run_stages(stages: &[Stage], cfg: &PipelineConfig) -> Result<Vec<Manifest>, CliError> {
    stages.iter().map(|&s| run_stage(s, cfg)).collect()
}

/// Loads the manifest each stage wrote under `run_dir`.
pub fn manifests(run_dir: &Path) -> anyhow::Result<BTreeMap<String, Manifest>> {
    let mut out = BTreeMap::new();
    for st in Stage::ALL {
        let p = run_dir.join(st.as_str()).join("manifest.json");
        if p.is_file() {
            out.insert(st.as_str().to_string(), Manifest::load(&p)?);
        }
    }
    Ok(out)
}
