use triad_core::io::{write_synth_city, SYNTH_FILES};
use triad_core::real::pearson;
use triad_core::synth::{generate, oracle_response, SynthCity, SynthConfig};

fn small(seed: u64) -> SynthConfig {
    SynthConfig { seed, blocks_x: 6, blocks_y: 5, n_pois: 400, ..SynthConfig::default() }
}

fn files(city: &SynthCity<f64>) -> Vec<Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    write_synth_city(city, dir.path()).unwrap();
    SYNTH_FILES.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect()
}

#[test]
fn same_seed_same_bytes() {
    let a: SynthCity<f64> = generate(&small(9)).unwrap();
    let b: SynthCity<f64> = generate(&small(9)).unwrap();
    assert_eq!(files(&a), files(&b));
    let c: SynthCity<f64> = generate(&small(10)).unwrap();
    assert_ne!(files(&a), files(&c));
}

#[test]
fn lattice_sizes() {
    for (bx, by) in [(2, 2), (4, 4), (5, 3)] {
        let cfg = SynthConfig { blocks_x: bx, blocks_y: by, n_pois: 50, ..small(1) };
        let city: SynthCity<f64> = generate(&cfg).unwrap();
        assert_eq!(city.segments.len(), bx * (by + 1) + by * (bx + 1));
        assert_eq!(city.features.n_rows(), city.segments.len());
        assert_eq!(city.truth.y.len(), city.segments.len());
    }
}

#[test]
fn oracle_matches_truth_signal() {
    let cfg = small(3);
    let city: SynthCity<f64> = generate(&cfg).unwrap();
    let s = oracle_response(&city.features, &cfg).unwrap();
    for (a, b) in s.iter().zip(&city.truth.signal) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn oracle_r2_tracks_noise() {
    let cfg = SynthConfig { blocks_x: 20, blocks_y: 20, n_pois: 1500, ..SynthConfig::default() };
    let city: SynthCity<f64> = generate(&cfg).unwrap();
    let s = &city.truth.signal;
    let n = s.len() as f64;
    let mu = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    let expected = var / (var + cfg.noise_sd * cfg.noise_sd);
    let r = pearson(&city.truth.y, s).unwrap();
    assert!((r * r - expected).abs() < 0.05, "r2 {} expected {expected}", r * r);
}

#[test]
fn quarter_is_denser_and_less_supplied() {
    let cfg = SynthConfig { blocks_x: 16, blocks_y: 16, n_pois: 1200, ..SynthConfig::default() };
    let city: SynthCity<f64> = generate(&cfg).unwrap();
    let q = city.quarter.unwrap();
    let inside = |x: f64, y: f64| x >= q.min_x && x < q.max_x && y >= q.min_y && y < q.max_y;
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let pop_in = mean(city.population.iter().filter(|c| inside(c.x, c.y)).map(|c| c.population).collect());
    let pop_out = mean(city.population.iter().filter(|c| !inside(c.x, c.y)).map(|c| c.population).collect());
    assert!(pop_in > 2.0 * pop_out);
    let planted = &city.truth.planted;
    let y_in = mean((0..planted.len()).filter(|&i| planted[i]).map(|i| city.truth.y[i]).collect());
    let y_out = mean((0..planted.len()).filter(|&i| !planted[i]).map(|i| city.truth.y[i]).collect());
    assert!(y_in < y_out);
    let off = SynthConfig { planted_quarter: false, ..cfg };
    assert!(generate::<f64>(&off).unwrap().quarter.is_none());
}

#[test]
fn attributes_have_gaps_features_do_not() {
    let city: SynthCity<f64> = generate(&small(4)).unwrap();
    assert!(city.features.columns.iter().all(|c| c.missing_count() == 0));
    assert!(city.attributes.columns.iter().all(|c| !c.name.starts_with("C_D_") && c.name != "C_deg_800m"));
}

#[test]
fn invalid_configs_rejected() {
    for cfg in [
        SynthConfig { blocks_x: 1, ..small(1) },
        SynthConfig { irregularity: 1.5, ..small(1) },
        SynthConfig { noise_sd: -1.0, ..small(1) },
        SynthConfig { w_c: 0.0, w_p: 0.0, w_l: 0.0, ..small(1) },
        SynthConfig { missing_fraction: 0.7, ..small(1) },
    ] {
        assert!(generate::<f64>(&cfg).is_err());
    }
}

#[test]
fn single_precision_city() {
    let city: SynthCity<f32> = generate(&small(5)).unwrap();
    assert!(city.truth.y.iter().all(|v| v.is_finite()));
}
