use std::io::Write;

use prexel_core::calibration::{
    fit_drift, fit_force_conductance, fit_proximity, force_of_conductance, read_drift_log, read_force_log,
    read_proximity_log, DriftFitConfig, ForceEstimate, ForceRuns, ModelFile,
};
use prexel_core::physics::DriftModel;
use prexel_core::poly::Polynomial;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn truth() -> Polynomial {
    Polynomial::new(vec![1e-4, 1.51e-4, -2e-6, 1e-7])
}

fn knots() -> Vec<f64> {
    (0..37).map(|i| 0.5 + 0.4 * i as f64).filter(|f| *f <= 15.0).collect()
}

/// Six runs with 7% independent relative noise on every reading.
fn noisy_runs(seed: u64) -> ForceRuns {
    let p = truth();
    let forces = knots();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 0.07).unwrap();
    let conductance = (0..6)
        .map(|_| forces.iter().map(|&f| p.eval(f) * (1.0 + n.sample(&mut rng))).collect())
        .collect();
    ForceRuns { forces, conductance }
}

#[test]
fn ci95_band_covers_true_curve() {
    let p = truth();
    let forces = knots();
    let mut covered = vec![0usize; forces.len()];
    let trials = 1000;
    for seed in 0..trials {
        let m = fit_force_conductance(&noisy_runs(seed), 3, (0.5, 15.0)).unwrap();
        for (k, &f) in forces.iter().enumerate() {
            if (m.conductance(f) - p.eval(f)).abs() <= m.ci95_at(f) {
                covered[k] += 1;
            }
        }
    }
    let worst = covered.iter().copied().min().unwrap() as f64 / trials as f64;
    assert!(worst >= 0.95, "worst knot coverage {worst}");
}

#[test]
fn force_log_to_model_file_and_back() {
    let runs = noisy_runs(1);
    let mut csv = String::from("run,force_n,conductance_s\n");
    for (r, row) in runs.conductance.iter().enumerate() {
        for (f, g) in runs.forces.iter().zip(row) {
            csv.push_str(&format!("{r},{f},{g:e}\n"));
        }
    }
    let parsed = read_force_log(csv.as_bytes()).unwrap();
    assert_eq!(parsed.forces.len(), runs.forces.len());
    let model = fit_force_conductance(&parsed, 3, (0.5, 15.0)).unwrap();

    let d = DriftModel::default();
    let mut drift_csv = String::from("time_s,resistance_ohm\n");
    for i in 0..3600 {
        let t = 3.0 * i as f64;
        drift_csv.push_str(&format!("{t},{}\n", d.resistance(t)));
    }
    let (t, r) = read_drift_log(drift_csv.as_bytes()).unwrap();
    let drift = fit_drift(&t, &r, &DriftFitConfig::default()).unwrap();
    assert!(((drift.model.b - d.b) / d.b).abs() < 1e-3);

    let mut prox_csv = String::from("distance_mm,counter\n");
    for c in [1605.0, 1612.0, 1610.0, 1615.0, 1608.0] {
        prox_csv.push_str(&format!(",{c}\n"));
    }
    for x in [20.0, 40.0, 60.0, 80.0] {
        prox_csv.push_str(&format!("{x},{}\n", 3220.0 / x + 1610.0));
    }
    let (baseline, pairs) = read_proximity_log(prox_csv.as_bytes()).unwrap();
    let prox = fit_proximity(&baseline, &pairs, 100.0).unwrap();
    assert!((prox.b - 1610.0).abs() < 1e-9);
    assert!((prox.a - 3220.0).abs() < 1e-6);

    let file = ModelFile {
        force: Some(model.clone()),
        drift: Some(drift.model),
        proximity: Some(prox),
        ..ModelFile::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("models.json");
    file.save(&path).unwrap();
    let back = ModelFile::load(&path).unwrap();
    assert_eq!(back, file);

    let g = model.conductance(8.1);
    match force_of_conductance(g, back.force.as_ref().unwrap()) {
        ForceEstimate::Value { force, half_width } => {
            assert!((force - 8.1).abs() < 1e-6);
            assert!(half_width > 0.0);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn model_file_rejects_other_versions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, r#"{{"version": 99}}"#).unwrap();
    assert!(ModelFile::load(&path).is_err());
}
