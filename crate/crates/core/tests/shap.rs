use rand::Rng;
use triad_core::matrix::Matrix;
use triad_core::real::spearman;
use triad_core::regressors::*;
use triad_core::rng::stream;
use triad_core::schema::{Dimension, TriadSchema};
use triad_core::shap::*;

fn random_data(rows: usize, cols: usize, seed: u64) -> (Matrix<f64>, Vec<f64>) {
    let mut rng = stream(seed, "shap-data", 0);
    let x = Matrix::<f64>::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let y = (0..rows)
        .map(|r| {
            let row = x.row(r);
            row[0] * row[1 % cols] + (3.0 * row[cols - 1]).sin() + 0.1 * rng.gen_range(-1.0..1.0)
        })
        .collect();
    (x, y)
}

fn random_model(seed: u64) -> (GbdtModel<f64>, Matrix<f64>) {
    let mut rng = stream(seed, "shap-model", 0);
    let cols = rng.gen_range(2..=12);
    let (x, y) = random_data(60, cols, seed);
    let p = Hyperparams {
        n_estimators: rng.gen_range(1..=20),
        max_depth: rng.gen_range(1..=4),
        learning_rate: 0.3,
        subsample: 0.8,
        colsample_bytree: 1.0,
        gamma: 0.0,
        seed,
        ..Default::default()
    };
    (fit_gbdt(&x, &y, &p).unwrap(), x)
}

#[test]
fn tree_shap_matches_subset_oracle() {
    for seed in 0..12 {
        let (m, x) = random_model(seed);
        let s = tree_shap(&m, &x).unwrap();
        for r in (0..x.rows()).step_by(7) {
            let oracle = shapley_oracle(&m, x.row(r)).unwrap();
            for j in 0..m.n_features() {
                assert!((s.values.get(r, j) - oracle[j]).abs() < 1e-9, "seed {seed} row {r} feature {j}");
            }
        }
    }
}

#[test]
fn local_accuracy_and_dummy() {
    for seed in 20..30 {
        let (m, x) = random_model(seed);
        let s = tree_shap(&m, &x).unwrap();
        let used: Vec<usize> = m.trees.iter().flat_map(|t| t.features_used()).collect();
        for r in 0..x.rows() {
            let f = m.predict_row(x.row(r));
            assert!((s.base_value + s.row_sum(r) - f).abs() < 1e-12);
            for j in 0..m.n_features() {
                if !used.contains(&j) {
                    assert_eq!(s.values.get(r, j), 0.0);
                }
            }
        }
    }
}

#[test]
fn efficiency_of_oracle_on_depth3_ensemble() {
    let (x, y) = random_data(80, 6, 77);
    let m = fit_gbdt(&x, &y, &Hyperparams { n_estimators: 15, max_depth: 3, ..Default::default() }).unwrap();
    let base = expected_value(&m);
    for r in 0..10 {
        let phi = shapley_oracle(&m, x.row(r)).unwrap();
        assert!((base + phi.iter().sum::<f64>() - m.predict_row(x.row(r))).abs() < 1e-12);
    }
}

fn stump(feature: usize, thr: f64, lo: f64, hi: f64, c_lo: f64, c_hi: f64) -> Tree<f64> {
    Tree {
        nodes: vec![
            TreeNode::Internal { feature, threshold: thr, left: 1, right: 2, cover: c_lo + c_hi },
            TreeNode::Leaf { value: lo, cover: c_lo },
            TreeNode::Leaf { value: hi, cover: c_hi },
        ],
    }
}

#[test]
fn additive_model_attributions() {
    let t0 = stump(0, 0.0, -1.0, 2.0, 2.0, 1.0);
    let t1 = stump(1, 0.5, 4.0, -3.0, 1.0, 3.0);
    let m = GbdtModel { base_score: 0.5, learning_rate: 0.1, trees: vec![t0.clone(), t1.clone()], feature_names: vec!["C_a".into(), "P_b".into()] };
    let x = Matrix::<f64>::new(2, 2, vec![-1.0, 1.0, 1.0, 0.0]).unwrap();
    let s = tree_shap(&m, &x).unwrap();
    for r in 0..2 {
        let row = x.row(r);
        assert!((s.values.get(r, 0) - 0.1 * (t0.predict_row(row) - t0.expected_value())).abs() < 1e-15);
        assert!((s.values.get(r, 1) - 0.1 * (t1.predict_row(row) - t1.expected_value())).abs() < 1e-15);
        let o = shapley_oracle(&m, row).unwrap();
        assert!((o[0] - s.values.get(r, 0)).abs() < 1e-15);
    }
}

#[test]
fn symmetric_features_share_credit() {
    // f = 1 iff both features are >= 0.5, splits in both orders with equal covers.
    let tree = Tree {
        nodes: vec![
            TreeNode::Internal { feature: 0, threshold: 0.5, left: 1, right: 2, cover: 4.0 },
            TreeNode::Leaf { value: 0.0, cover: 2.0 },
            TreeNode::Internal { feature: 1, threshold: 0.5, left: 3, right: 4, cover: 2.0 },
            TreeNode::Leaf { value: 0.0, cover: 1.0 },
            TreeNode::Leaf { value: 1.0, cover: 1.0 },
        ],
    };
    let m = GbdtModel { base_score: 0.0, learning_rate: 1.0, trees: vec![tree], feature_names: vec!["C_a".into(), "C_b".into()] };
    let x = Matrix::<f64>::new(1, 2, vec![1.0, 1.0]).unwrap();
    let s = tree_shap(&m, &x).unwrap();
    assert!((s.values.get(0, 0) - s.values.get(0, 1)).abs() < 1e-15);
    assert!((s.row_sum(0) - 0.75).abs() < 1e-15);
}

#[test]
fn repeated_feature_on_path() {
    let tree = Tree {
        nodes: vec![
            TreeNode::Internal { feature: 0, threshold: 0.0, left: 1, right: 4, cover: 10.0 },
            TreeNode::Internal { feature: 0, threshold: -0.5, left: 2, right: 3, cover: 6.0 },
            TreeNode::Leaf { value: -2.0, cover: 2.0 },
            TreeNode::Leaf { value: 1.0, cover: 4.0 },
            TreeNode::Internal { feature: 1, threshold: 0.0, left: 5, right: 6, cover: 4.0 },
            TreeNode::Leaf { value: 0.5, cover: 1.0 },
            TreeNode::Leaf { value: 3.0, cover: 3.0 },
        ],
    };
    let m = GbdtModel { base_score: 0.0, learning_rate: 1.0, trees: vec![tree], feature_names: vec!["C_a".into(), "L_b".into()] };
    for row in [[-1.0, 1.0], [-0.2, -1.0], [0.4, -0.3], [0.4, 0.3]] {
        let x = Matrix::<f64>::new(1, 2, row.to_vec()).unwrap();
        let s = tree_shap(&m, &x).unwrap();
        let o = shapley_oracle(&m, &row).unwrap();
        for j in 0..2 {
            assert!((s.values.get(0, j) - o[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn linearity_over_concatenated_ensembles() {
    let (a, x) = random_model(40);
    let (x2, y2) = random_data(60, a.n_features(), 41);
    let b = fit_gbdt(&x2, &y2, &Hyperparams { n_estimators: 5, max_depth: 3, learning_rate: a.learning_rate, ..Default::default() }).unwrap();
    let mut both = a.clone();
    both.trees.extend(b.trees.iter().cloned());
    both.base_score = a.base_score + b.base_score;
    let (sa, sb, sboth) = (tree_shap(&a, &x).unwrap(), tree_shap(&b, &x).unwrap(), tree_shap(&both, &x).unwrap());
    for r in 0..x.rows() {
        for j in 0..a.n_features() {
            assert!((sa.values.get(r, j) + sb.values.get(r, j) - sboth.values.get(r, j)).abs() < 1e-12);
        }
    }
}

#[test]
fn dependence_levels_and_monotone_effect() {
    let t = stump(0, 0.0, -1.0, 1.0, 5.0, 5.0);
    let m = GbdtModel { base_score: 0.0, learning_rate: 1.0, trees: vec![t], feature_names: vec!["C_a".into(), "C_k".into()] };
    let (x, _) = random_data(40, 2, 3);
    let s = tree_shap(&m, &x).unwrap();
    let mut levels: Vec<u64> = dependence_table(&s, &x, "C_a").unwrap().iter().map(|p| p.1.to_bits()).collect();
    levels.sort();
    levels.dedup();
    assert_eq!(levels.len(), 2);
    let constant = Matrix::<f64>::new(40, 2, (0..40).flat_map(|r| [x.get(r, 0), 7.0]).collect()).unwrap();
    let s = tree_shap(&m, &constant).unwrap();
    assert!(dependence_table(&s, &constant, "C_k").unwrap().iter().all(|p| p.0 == 7.0));

    let (x, _) = random_data(300, 3, 9);
    let y: Vec<f64> = (0..300).map(|r| 2.0 * x.get(r, 0).powi(3) + 0.2 * x.get(r, 1)).collect();
    let m = fit_gbdt(&x, &y, &Hyperparams { n_estimators: 100, max_depth: 3, learning_rate: 0.1, ..Default::default() })
        .unwrap()
        .with_feature_names(vec!["C_a".into(), "P_b".into(), "L_c".into()])
        .unwrap();
    let s = tree_shap(&m, &x).unwrap();
    let pairs = dependence_table(&s, &x, "C_a").unwrap();
    let (v, phi): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    assert!(spearman(&v, &phi).unwrap() > 0.9);
}

#[test]
fn planted_conceived_signal_dominates() {
    let (x, _) = random_data(300, 6, 12);
    let y: Vec<f64> = (0..300).map(|r| x.get(r, 0) + (2.0 * x.get(r, 1)).sin()).collect();
    let names = ["C_a", "C_b", "P_c", "P_d", "L_e", "L_f"].iter().map(|s| s.to_string()).collect();
    let m = fit_gbdt(&x, &y, &Hyperparams { n_estimators: 80, max_depth: 3, learning_rate: 0.1, ..Default::default() })
        .unwrap()
        .with_feature_names(names)
        .unwrap();
    let g = group_shap(&tree_shap(&m, &x).unwrap(), &TriadSchema::default()).unwrap();
    assert!(g.share(Dimension::C) > 0.8, "{:?}", g.shares);
}

#[test]
fn ols_attributions_are_additive() {
    let (x, y) = random_data(50, 3, 5);
    let ols = fit_ols(&x, &y).unwrap();
    let names: Vec<String> = ["C_a", "P_b", "L_c"].iter().map(|s| s.to_string()).collect();
    let s = ols_attributions(&ols, &x, &names).unwrap();
    for r in 0..50 {
        assert!((s.base_value + s.row_sum(r) - ols.predict_row(x.row(r))).abs() < 1e-12);
    }
}
