//! Pipeline configuration (TOML). Every field has a default, so an empty
//! file is a complete configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use triad_core::intervention::{DirectionRule, Scenario};
use triad_core::lisa::{Cluster, Contiguity, LisaParams};
use triad_core::pipeline::FeatureConfig;
use triad_core::regressors::{ForestParams, Hyperparams, MaxFeatures, SearchSpace};
use triad_core::schema::Dimension;
use triad_core::synth::SynthConfig;
use triad_core::typology::DeprivationMode;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Directory holding every stage's artifacts.
    pub run_dir: PathBuf,
    pub inputs: Inputs,
    pub synth: SynthSection,
    pub graph: GraphSection,
    pub features: FeatureSection,
    pub train: TrainSection,
    pub explain: ExplainSection,
    pub classify: ClassifySection,
    pub mismatch: MismatchSection,
    pub simulate: SimulateSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            run_dir: PathBuf::from("run"),
            inputs: Inputs::default(),
            synth: SynthSection::default(),
            graph: GraphSection::default(),
            features: FeatureSection::default(),
            train: TrainSection::default(),
            explain: ExplainSection::default(),
            classify: ClassifySection::default(),
            mismatch: MismatchSection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

/// Raw input files. Unset entries fall back to the `synth` stage outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segments: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attributes: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pois: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landuse: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<PathBuf>,
}

impl Inputs {
    pub fn is_synthetic(&self) -> bool {
        self.segments.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub block_m: f64,
    pub irregularity: f64,
    pub n_trajectories: usize,
    pub n_pois: usize,
    pub noise_sd: f64,
    pub w_c: f64,
    pub w_p: f64,
    pub w_l: f64,
    pub planted_quarter: bool,
    pub missing_fraction: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            blocks_x: d.blocks_x,
            blocks_y: d.blocks_y,
            block_m: d.block_m,
            irregularity: d.irregularity,
            n_trajectories: d.n_trajectories,
            n_pois: d.n_pois,
            noise_sd: d.noise_sd,
            w_c: d.w_c,
            w_p: d.w_p,
            w_l: d.w_l,
            planted_quarter: d.planted_quarter,
            missing_fraction: d.missing_fraction,
        }
    }
}

impl SynthSection {
    pub fn to_core(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            blocks_x: self.blocks_x,
            blocks_y: self.blocks_y,
            block_m: self.block_m,
            irregularity: self.irregularity,
            n_trajectories: self.n_trajectories,
            n_pois: self.n_pois,
            noise_sd: self.noise_sd,
            w_c: self.w_c,
            w_p: self.w_p,
            w_l: self.w_l,
            planted_quarter: self.planted_quarter,
            missing_fraction: self.missing_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub snap_tolerance_m: f64,
    pub radius_m: f64,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self { snap_tolerance_m: 0.5, radius_m: 800.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub radii: Vec<f64>,
    /// Response column, `log_d<r>_norm` for one of `radii`.
    pub response: String,
    pub resample_interval_m: f64,
    pub poi_radius_m: f64,
    pub landuse_radius_m: f64,
    pub interpolation_rounds: usize,
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            radii: vec![10.0, 20.0, 30.0],
            response: "log_d30_norm".into(),
            resample_interval_m: 5.0,
            poi_radius_m: 300.0,
            landuse_radius_m: 100.0,
            interpolation_rounds: 5,
        }
    }
}

impl FeatureSection {
    pub fn to_core(&self, graph: &GraphSection) -> Result<FeatureConfig<f64>, CliError> {
        let radius = self
            .radii
            .iter()
            .copied()
            .find(|&r| triad_core::features::density_column_name(r) == self.response)
            .ok_or_else(|| CliError::config("features.response", format!("`{}` is not log_d<r>_norm for any configured radius", self.response)))?;
        Ok(FeatureConfig {
            radii: self.radii.clone(),
            response_radius: radius,
            resample_interval_m: self.resample_interval_m,
            poi_radius_m: self.poi_radius_m,
            landuse_radius_m: self.landuse_radius_m,
            centrality_radius_m: graph.radius_m,
            snap_tolerance_m: graph.snap_tolerance_m,
            interpolation_rounds: self.interpolation_rounds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub k_folds: usize,
    /// Random-search draws; 0 trains `gbdt` as given.
    pub n_draws: usize,
    pub search: SearchSection,
    pub gbdt: GbdtSection,
    pub forest: ForestSection,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            k_folds: 10,
            n_draws: 30,
            search: SearchSection::default(),
            gbdt: GbdtSection::default(),
            forest: ForestSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub subsample: Vec<f64>,
    pub colsample_bytree: Vec<f64>,
    pub gamma: Vec<f64>,
    pub n_estimators: Vec<usize>,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = SearchSpace::<f64>::default();
        Self {
            max_depth: d.max_depth,
            learning_rate: d.learning_rate,
            subsample: d.subsample,
            colsample_bytree: d.colsample_bytree,
            gamma: d.gamma,
            n_estimators: d.n_estimators,
        }
    }
}

impl SearchSection {
    pub fn to_core(&self, gbdt: &GbdtSection) -> SearchSpace<f64> {
        SearchSpace {
            max_depth: self.max_depth.clone(),
            learning_rate: self.learning_rate.clone(),
            subsample: self.subsample.clone(),
            colsample_bytree: self.colsample_bytree.clone(),
            gamma: self.gamma.clone(),
            n_estimators: self.n_estimators.clone(),
            lambda: gbdt.lambda,
            min_child_weight: gbdt.min_child_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtSection {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
}

impl Default for GbdtSection {
    fn default() -> Self {
        let d = Hyperparams::<f64>::default();
        Self {
            n_estimators: d.n_estimators,
            max_depth: d.max_depth,
            learning_rate: d.learning_rate,
            subsample: d.subsample,
            colsample_bytree: d.colsample_bytree,
            gamma: d.gamma,
            lambda: d.lambda,
            min_child_weight: d.min_child_weight,
        }
    }
}

impl GbdtSection {
    pub fn to_core(&self, seed: u64) -> Hyperparams<f64> {
        Hyperparams {
            n_estimators: self.n_estimators,
            max_depth: self.max_depth,
            learning_rate: self.learning_rate,
            subsample: self.subsample,
            colsample_bytree: self.colsample_bytree,
            gamma: self.gamma,
            lambda: self.lambda,
            min_child_weight: self.min_child_weight,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSection {
    pub n_estimators: usize,
    pub max_depth: usize,
    /// `auto`, `sqrt` or `log2`.
    pub max_features: String,
}

impl Default for ForestSection {
    fn default() -> Self {
        let d = ForestParams::default();
        Self { n_estimators: d.n_estimators, max_depth: d.max_depth, max_features: d.max_features.as_str().into() }
    }
}

impl ForestSection {
    pub fn to_core(&self, seed: u64) -> Result<ForestParams, CliError> {
        let max_features = MaxFeatures::parse(&self.max_features)
            .map_err(|_| CliError::config("train.forest.max_features", format!("unknown value `{}`", self.max_features)))?;
        Ok(ForestParams { n_estimators: self.n_estimators, max_depth: self.max_depth, max_features, seed })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    /// Report land use (O) inside C in the group shares.
    pub merge_o_into_c: bool,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self { merge_o_into_c: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub quantile: f64,
    /// `negated_sum` or `negative_only`.
    pub mode: String,
    /// Thresholds per segment district instead of citywide.
    pub by_district: bool,
}

impl Default for ClassifySection {
    fn default() -> Self {
        Self { quantile: 0.8, mode: DeprivationMode::default().as_str().into(), by_district: false }
    }
}

impl ClassifySection {
    pub fn mode(&self) -> Result<DeprivationMode, CliError> {
        DeprivationMode::parse(&self.mode).map_err(|_| CliError::config("classify.mode", format!("unknown mode `{}`", self.mode)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MismatchSection {
    pub cell_size_m: f64,
    pub permutations: usize,
    pub alpha: f64,
    /// `queen` or `rook`.
    pub contiguity: String,
    /// Cluster whose connected cells form the intervention zones.
    pub target: String,
}

impl Default for MismatchSection {
    fn default() -> Self {
        Self { cell_size_m: 200.0, permutations: 999, alpha: 0.05, contiguity: "queen".into(), target: "HL".into() }
    }
}

impl MismatchSection {
    pub fn contiguity(&self) -> Result<Contiguity, CliError> {
        match self.contiguity.as_str() {
            "queen" => Ok(Contiguity::Queen),
            "rook" => Ok(Contiguity::Rook),
            other => Err(CliError::config("mismatch.contiguity", format!("unknown scheme `{other}`"))),
        }
    }

    pub fn target(&self) -> Result<Cluster, CliError> {
        Cluster::parse(&self.target).map_err(|e| CliError::config("mismatch.target", e.to_string()))
    }

    pub fn lisa(&self, seed: u64) -> LisaParams<f64> {
        LisaParams { permutations: self.permutations, alpha: self.alpha, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// `zone_spearman` or `global_slope`.
    pub direction: String,
    pub scenarios: Vec<ScenarioSpec>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let scenarios = triad_core::intervention::default_grid::<f64>()
            .iter()
            .map(|s| ScenarioSpec { dimensions: s.label(), intensity: s.intensity, top_k: s.top_k })
            .collect();
        Self { direction: "zone_spearman".into(), scenarios }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Dimensions joined by `+`, e.g. `C+P+L`.
    pub dimensions: String,
    /// Shift in zone standard deviations, in [0, 1].
    pub intensity: f64,
    pub top_k: usize,
}

impl SimulateSection {
    pub fn direction(&self) -> Result<DirectionRule, CliError> {
        match self.direction.as_str() {
            "zone_spearman" => Ok(DirectionRule::ZoneSpearman),
            "global_slope" => Ok(DirectionRule::GlobalSlope),
            other => Err(CliError::config("simulate.direction", format!("unknown rule `{other}`"))),
        }
    }

    pub fn to_core(&self) -> Result<Vec<Scenario<f64>>, CliError> {
        let direction = self.direction()?;
        self.scenarios
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let key = format!("simulate.scenarios[{i}]");
                let dims = spec
                    .dimensions
                    .split('+')
                    .map(|d| Dimension::parse(d.trim()).ok_or_else(|| CliError::config(&format!("{key}.dimensions"), format!("unknown dimension `{d}`"))))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut s = Scenario::new(&dims, spec.intensity, spec.top_k);
                s.direction = direction;
                s.validate().map_err(|e| CliError::config(&format!("{key}.intensity"), e.to_string()))?;
                Ok(s)
            })
            .collect()
    }
}

fn range(key: &str, ok: bool, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(key, msg.to_string()))
    }
}

impl PipelineConfig {
    /// Parses TOML, rejecting any key the schema does not define.
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", origin.display(), e.to_string().trim_end())))?;
        let defaults = toml::Table::try_from(Self::default()).expect("defaults serialize");
        check_keys(&user, &defaults, "")?;
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {}", origin.display(), e.to_string().trim_end())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, path)?;
        cfg.resolve_relative_to(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative paths relative to `base` (the config file's directory).
    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !base.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.run_dir);
        let i = &mut self.inputs;
        for p in [&mut i.segments, &mut i.attributes, &mut i.trajectories, &mut i.pois, &mut i.landuse, &mut i.population].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.synth;
        s.to_core(self.seed).validate().map_err(|e| CliError::config("synth", e.to_string()))?;
        let g = &self.graph;
        range("graph.snap_tolerance_m", g.snap_tolerance_m >= 0.0, "must be >= 0")?;
        range("graph.radius_m", g.radius_m > 0.0, "must be > 0")?;
        let f = &self.features;
        range("features.radii", !f.radii.is_empty() && f.radii.iter().all(|r| *r > 0.0), "must be a non-empty list of positive radii")?;
        range("features.resample_interval_m", f.resample_interval_m > 0.0, "must be > 0")?;
        range("features.poi_radius_m", f.poi_radius_m > 0.0, "must be > 0")?;
        range("features.landuse_radius_m", f.landuse_radius_m > 0.0, "must be > 0")?;
        f.to_core(g)?;
        let t = &self.train;
        range("train.k_folds", t.k_folds >= 2, "must be >= 2")?;
        t.search.to_core(&t.gbdt).validate().map_err(|e| CliError::config("train.search", e.to_string()))?;
        t.gbdt.to_core(self.seed).validate().map_err(|e| CliError::config("train.gbdt", e.to_string()))?;
        range("train.forest.n_estimators", t.forest.n_estimators >= 1, "must be >= 1")?;
        range("train.forest.max_depth", t.forest.max_depth >= 1, "must be >= 1")?;
        t.forest.to_core(self.seed)?;
        let c = &self.classify;
        range("classify.quantile", c.quantile > 0.0 && c.quantile < 1.0, "must lie in (0, 1)")?;
        c.mode()?;
        let m = &self.mismatch;
        range("mismatch.cell_size_m", m.cell_size_m > 0.0, "must be > 0")?;
        range("mismatch.permutations", m.permutations >= 99, "must be >= 99")?;
        range("mismatch.alpha", m.alpha > 0.0 && m.alpha < 1.0, "must lie in (0, 1)")?;
        m.contiguity()?;
        m.target()?;
        self.simulate.to_core()?;
        Ok(())
    }
}

fn check_keys(user: &toml::Table, defaults: &toml::Table, prefix: &str) -> Result<(), CliError> {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let known = defaults.get(k).or_else(|| optional_key(prefix, k));
        let Some(d) = known else {
            return Err(CliError::config(&path, "unknown key".into()));
        };
        match (v, d) {
            (toml::Value::Table(u), toml::Value::Table(dt)) => check_keys(u, dt, &path)?,
            (toml::Value::Array(items), toml::Value::Array(ds)) => {
                if let Some(toml::Value::Table(template)) = ds.first() {
                    for (i, item) in items.iter().enumerate() {
                        if let toml::Value::Table(t) = item {
                            check_keys(t, template, &format!("{path}[{i}]"))?;
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Keys that are absent from the serialized defaults because they default to unset.
fn optional_key(prefix: &str, key: &str) -> Option<&'static toml::Value> {
    static EMPTY: toml::Value = toml::Value::Boolean(false);
    let optional = prefix == "inputs" && ["segments", "attributes", "trajectories", "pois", "landuse", "population"].contains(&key);
    optional.then_some(&EMPTY)
}
