use rand::Rng;

use triad_core::intervention::{default_grid, format_table, rank_features, scenario_grid, simulate, DirectionRule, Scenario, SimulationContext, TABLE_HEADER};
use triad_core::lisa::{bivariate_lisa, build_weights, mismatch_zones, Cluster, Contiguity, LisaParams, LisaResult};
use triad_core::matrix::Matrix;
use triad_core::regressors::Regressor;
use triad_core::rng::{shuffle, stream};
use triad_core::schema::{Dimension, NormRecord, TransformKind};
use triad_core::shap::ShapMatrix;
use triad_core::typology::{classify_by_region, classify_typology, Typology};

fn lattice(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).collect()
}

#[test]
fn typology_thresholds_are_per_region() {
    let mut scores = Vec::new();
    let mut regions = Vec::new();
    for i in 0..50 {
        scores.push([i as f64, 0.0, 0.0]);
        regions.push("low".to_string());
        scores.push([1000.0 + i as f64, 0.0, 0.0]);
        regions.push("high".to_string());
    }
    let r = classify_by_region(&scores, &regions, 0.8).unwrap();
    let flagged = |reg: &str| (0..scores.len()).filter(|&i| regions[i] == reg && r.labels[i] == Typology::COnly).count();
    assert_eq!(flagged("low"), 10);
    assert_eq!(flagged("high"), 10);
    assert_eq!(r.thresholds.len(), 2);
    let city = classify_typology(&scores, 0.8).unwrap();
    assert!((0..scores.len()).filter(|&i| city.labels[i] == Typology::COnly).all(|i| regions[i] == "high"));
}

#[test]
fn typology_rejects_bad_inputs() {
    let s = vec![[0.0; 3]; 10];
    assert!(classify_typology(&s, 1.0).is_err());
    assert!(classify_typology(&s, 0.0).is_err());
    assert!(classify_typology(&s[..3], 0.8).is_err());
    assert!(classify_typology(&[[f64::NAN, 0.0, 0.0]; 10], 0.8).is_err());
}

#[test]
fn typology_counts_sum_and_parse() {
    let mut rng = stream(1, "t", 0);
    let s: Vec<[f64; 3]> = (0..300).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let r = classify_typology(&s, 0.8).unwrap();
    assert_eq!(r.counts().values().sum::<usize>(), 300);
    for t in Typology::ALL {
        assert_eq!(Typology::parse(t.as_str()), Some(t));
    }
}

#[test]
fn lisa_is_independent_of_cell_order() {
    let mut rng = stream(2, "lisa-order", 0);
    let cells = lattice(8);
    let x: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
    let p = LisaParams { permutations: 199, alpha: 0.05, seed: 3 };
    let a = bivariate_lisa(&x, &y, &build_weights(&cells, Contiguity::Queen).unwrap(), &p).unwrap();
    let mut perm: Vec<usize> = (0..64).collect();
    shuffle(&mut rng, &mut perm);
    let cells2: Vec<_> = perm.iter().map(|&i| cells[i]).collect();
    let x2: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
    let y2: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
    let b = bivariate_lisa(&x2, &y2, &build_weights(&cells2, Contiguity::Queen).unwrap(), &p).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(a.pseudo_p[i].to_bits(), b.pseudo_p[k].to_bits());
        assert_eq!(a.clusters[i], b.clusters[k]);
        assert!((a.local_i[i] - b.local_i[k]).abs() < 1e-12);
    }
}

#[test]
fn permutation_statistic_is_centered_under_noise() {
    // Under spatial randomness the global statistic averages close to zero.
    let w = build_weights(&lattice(10), Contiguity::Queen).unwrap();
    let mut total = 0.0;
    for seed in 0..40 {
        let mut rng = stream(seed, "lisa-null", 0);
        let x: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..1.0)).collect();
        total += bivariate_lisa(&x, &y, &w, &LisaParams { permutations: 99, alpha: 0.05, seed }).unwrap().global_i();
    }
    assert!((total / 40.0).abs() < 0.05);
}

#[test]
fn planted_block_is_high_low() {
    let cells = lattice(10);
    let w = build_weights(&cells, Contiguity::Queen).unwrap();
    let mut rng = stream(4, "block", 0);
    let inside = |&(r, c): &(usize, usize)| r < 4 && c < 4;
    let x: Vec<f64> = cells.iter().map(|cell| if inside(cell) { 10.0 } else { 1.0 } + rng.gen_range(0.0..0.5)).collect();
    let y: Vec<f64> = cells.iter().map(|cell| if inside(cell) { 1.0 } else { 10.0 } + rng.gen_range(0.0..0.5)).collect();
    let r = bivariate_lisa(&x, &y, &w, &LisaParams::default()).unwrap();
    let interior = cells.iter().enumerate().filter(|(_, &(r, c))| r < 3 && c < 3);
    for (i, _) in interior {
        assert_eq!(r.clusters[i], Cluster::HL);
    }
}

#[test]
fn lisa_rejects_bad_inputs() {
    let w = build_weights(&lattice(3), Contiguity::Rook).unwrap();
    let ok = vec![1.0; 9];
    assert!(bivariate_lisa(&ok[..8], &ok, &w, &LisaParams::default()).is_err());
    assert!(bivariate_lisa(&ok, &ok, &w, &LisaParams { permutations: 10, ..LisaParams::default() }).is_err());
    let mut bad = ok.clone();
    bad[0] = f64::INFINITY;
    assert!(bivariate_lisa(&bad, &ok, &w, &LisaParams::default()).is_err());
}

#[test]
fn zones_join_touching_cells() {
    let cells = lattice(4);
    let w = build_weights(&cells, Contiguity::Queen).unwrap();
    let mut clusters = vec![Cluster::NS; 16];
    // Cells 0 and 5 touch diagonally; 15 stands alone.
    for i in [0, 5, 15] {
        clusters[i] = Cluster::HL;
    }
    let lisa = LisaResult {
        z_x: vec![0.0; 16],
        z_y: vec![0.0; 16],
        lag_y: vec![0.0; 16],
        local_i: vec![0.0; 16],
        pseudo_p: vec![0.01; 16],
        clusters,
        params: LisaParams::default(),
    };
    let segment_cells = vec![vec![0], vec![5, 6], vec![15], vec![3]];
    let labels = vec![Typology::CPL, Typology::None, Typology::POnly, Typology::LOnly];
    let rep = mismatch_zones(&lisa, &w, &labels, &segment_cells, Cluster::HL).unwrap();
    assert_eq!(rep.zones.len(), 2);
    assert_eq!(rep.target_segments(), vec![0, 1, 2]);
    assert_eq!(rep.crosstab[&(Cluster::HL, Typology::None)], 1);
    assert_eq!(rep.crosstab[&(Cluster::NS, Typology::None)], 1);
    assert_eq!(rep.crosstab[&(Cluster::NS, Typology::LOnly)], 1);
}

struct Linear(Vec<f64>);

impl Regressor<f64> for Linear {
    fn predict_row(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.0).map(|(a, b)| a * b).sum()
    }
}

struct Fixture {
    model: Linear,
    x: Matrix<f64>,
    shap: ShapMatrix<f64>,
    dims: Vec<Dimension>,
    response: NormRecord<f64>,
    zone: Vec<usize>,
}

fn fixture(beta: Vec<f64>, dims: Vec<Dimension>) -> Fixture {
    let (n, p) = (120, beta.len());
    let mut rng = stream(8, "fixture", 0);
    let x = Matrix::new(n, p, (0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let means: Vec<f64> = (0..p).map(|j| (0..n).map(|r| x.get(r, j)).sum::<f64>() / n as f64).collect();
    let mut phi = Matrix::zeros(n, p);
    for r in 0..n {
        for j in 0..p {
            phi.set(r, j, beta[j] * (x.get(r, j) - means[j]));
        }
    }
    let shap = ShapMatrix { base_value: 0.0, values: phi, feature_names: (0..p).map(|j| format!("f{j}")).collect() };
    let response = NormRecord { feature: "log_d30_norm".into(), kind: TransformKind::Log1pZscore, mean: 1.0, std: 0.4, degenerate: false };
    Fixture { model: Linear(beta), x, shap, dims, response, zone: (0..60).collect() }
}

impl Fixture {
    fn ctx(&self) -> SimulationContext<'_, f64, Linear> {
        SimulationContext { model: &self.model, x: &self.x, shap: &self.shap, feature_dims: &self.dims, response: &self.response, zone: &self.zone }
    }
}

#[test]
fn negative_effects_are_pushed_down() {
    use Dimension::*;
    let f = fixture(vec![0.5, -0.7, 0.3], vec![C, P, L]);
    let rep = simulate(&f.ctx(), &Scenario::new(&[C, P, L], 0.2, 5)).unwrap();
    let dir: Vec<(String, f64)> = rep.applied.iter().map(|a| (a.feature.clone(), a.direction)).collect();
    assert!(dir.contains(&("f1".to_string(), -1.0)));
    assert!(dir.contains(&("f0".to_string(), 1.0)));
    assert!(rep.improvement_pct > 0.0);
    let mut g = Scenario::new(&[C, P, L], 0.2, 5);
    g.direction = DirectionRule::GlobalSlope;
    let rep2 = simulate(&f.ctx(), &g).unwrap();
    assert_eq!(rep2.applied.iter().map(|a| a.direction).collect::<Vec<_>>(), rep.applied.iter().map(|a| a.direction).collect::<Vec<_>>());
}

#[test]
fn top_k_is_per_dimension() {
    use Dimension::*;
    let f = fixture(vec![0.9, 0.5, 0.1, 0.8, 0.2, 0.05, 0.3], vec![C, C, O, P, P, P, L]);
    let ranked = rank_features(&f.shap, &f.dims, &[C, P], &f.zone, 2).unwrap();
    let names: Vec<&str> = ranked.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, vec!["f0", "f3", "f1", "f4"]);
    let with_o = rank_features(&f.shap, &f.dims, &[C], &f.zone, 5).unwrap();
    assert_eq!(with_o.len(), 3);
}

#[test]
fn zero_intensity_and_empty_zone() {
    use Dimension::*;
    let mut f = fixture(vec![0.5, 0.4, 0.3], vec![C, P, L]);
    let r = simulate(&f.ctx(), &Scenario::new(&[C, P, L], 0.0, 3)).unwrap();
    assert_eq!(r.improvement_pct, 0.0);
    assert_eq!(r.perturbed_density, r.baseline_density);
    f.zone.clear();
    let r = simulate(&f.ctx(), &Scenario::new(&[C], 0.2, 3)).unwrap();
    assert_eq!(r.affected_segments, 0);
    assert_eq!(r.improvement_pct, 0.0);
}

#[test]
fn scenario_validation() {
    use Dimension::*;
    assert!(Scenario::new(&[O], 0.2, 5).validate().is_err());
    assert!(Scenario::new(&[C], 1.5, 5).validate().is_err());
    assert!(Scenario::new(&[C], -0.1, 5).validate().is_err());
    assert!(Scenario::new(&[C], 0.2, 0).validate().is_err());
    assert!(Scenario::<f64>::new(&[], 0.2, 5).validate().is_err());
    assert_eq!(Scenario::new(&[C, P, L], 0.2, 5).label(), "C+P+L");
}

#[test]
fn grid_table_shape() {
    use Dimension::*;
    let f = fixture(vec![0.5, 0.4, 0.3, 0.2], vec![C, P, L, O]);
    let mut grid = default_grid::<f64>();
    grid.push(Scenario::new(&[C], 2.0, 5));
    let rows = scenario_grid(&f.ctx(), &grid);
    let table = format_table(&rows);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], TABLE_HEADER);
    assert_eq!(lines.len(), 12);
    assert!(lines[1].starts_with("C,20,5,"));
    assert!(lines[10].starts_with("C+P+L,30,15,"));
    assert!(lines[11].contains("error"));
    let pct: Vec<f64> = rows[..10].iter().map(|r| r.outcome.as_ref().unwrap().improvement_pct).collect();
    assert!(pct[6] >= pct[0].max(pct[1]).max(pct[2]));
    assert!(pct[8] >= pct[7]);
}
