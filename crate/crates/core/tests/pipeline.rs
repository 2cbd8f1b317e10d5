use std::path::Path;

use windregime::ingest::{self, reference_scenario, SynthConfig};
use windregime::validate::{compare, run_cluster_pipeline, run_oracle};
use windregime::{default_farm, JensenSolver, KMeansConfig};

fn tiny() -> SynthConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny/synth.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn shipped_reference_config_matches_builtin() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference/synth.json");
    let shipped: SynthConfig = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(shipped, reference_scenario());
}

/// Fraction of days whose cluster's majority regime equals their own regime.
fn purity(labels: &[usize], truth: &[usize], k: usize, n_regimes: usize) -> f64 {
    let mut table = vec![vec![0usize; n_regimes]; k];
    for (&l, &t) in labels.iter().zip(truth) {
        table[l][t] += 1;
    }
    let hit: usize = table.iter().map(|row| row.iter().max().copied().unwrap_or(0)).sum();
    hit as f64 / labels.len() as f64
}

#[test]
fn clustering_recovers_generating_regimes() {
    let cfg = tiny();
    let n_regimes = cfg.spec.regimes.len();
    let (ds, truth) = cfg.generate().unwrap();
    let model = KMeansConfig::new(n_regimes).seed(3).fit(&ds, &["u100", "v100"]).unwrap();
    let p = purity(&model.labels, &truth, n_regimes, n_regimes);
    assert!(p >= 0.8, "purity {p}");
}

#[test]
fn library_pipeline_agrees_with_oracle() {
    let (ds, _) = tiny().generate().unwrap();
    let farm = default_farm();
    let model = KMeansConfig::new(6).seed(1).fit(&ds, &["u100", "v100"]).unwrap();
    let solver = JensenSolver::default();
    let all = 0..ds.len();
    let pipe = run_cluster_pipeline(&model, &ds, &farm, &solver, all.clone()).unwrap();
    let oracle = run_oracle(&ds, &farm, &solver, all).unwrap();
    assert_eq!(pipe.solver_runs, 6);
    assert_eq!(oracle.runs, ds.len());
    let report = compare(&pipe.complex, &oracle, &pipe.labels, pipe.solver_runs).unwrap();
    assert!(report.power_rel_error < 0.1, "{}", report.power_rel_error);
    // Both estimates sum the same days.
    assert_eq!(pipe.simple.n_days, pipe.complex.n_days);
}

#[test]
fn dataset_round_trips_through_disk() {
    let (ds, _) = tiny().generate().unwrap();
    let dir = tempfile::tempdir().unwrap();
    ingest::write_dataset(&ds, dir.path()).unwrap();
    let back = ingest::read_dataset(dir.path()).unwrap();
    assert_eq!(back.times(), ds.times());
    assert_eq!(back.grid(), ds.grid());
    assert!(back.data().iter().zip(ds.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    // Aggregating from the re-read dataset is unaffected.
    let model = KMeansConfig::new(4).seed(2).fit(&back, &["u100", "v100"]).unwrap();
    let model2 = KMeansConfig::new(4).seed(2).fit(&ds, &["u100", "v100"]).unwrap();
    assert_eq!(model.labels, model2.labels);
}
