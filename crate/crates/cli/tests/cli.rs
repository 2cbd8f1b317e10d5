use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_windregime"))
}

fn tiny_spec() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny/synth.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A temp directory holding the tiny dataset and a run config pointing at it.
fn workspace(extra: &str) -> (TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = run(&["synth", "--config", path(&tiny_spec()), "--out", path(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, format!("{{\"dataset\": \"data\", \"out_dir\": \"out\", \"seed\": 1{extra}}}")).unwrap();
    (tmp, cfg)
}

#[test]
fn tiny_pipeline_runs_end_to_end() {
    let (tmp, cfg) = workspace("");
    let data = tmp.path().join("data");
    let before: Vec<Vec<u8>> = ["manifest.json", "data.bin"].iter().map(|f| fs::read(data.join(f)).unwrap()).collect();
    let t = Instant::now();
    let out = run(&["run", "--config", path(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(t.elapsed() < Duration::from_secs(60));
    let after: Vec<Vec<u8>> = ["manifest.json", "data.bin"].iter().map(|f| fs::read(data.join(f)).unwrap()).collect();
    assert_eq!(before, after, "input dataset was modified");
    let o = tmp.path().join("out");
    for f in [
        "elbow.csv",
        "model.json",
        "transitions.csv",
        "labels.csv",
        "wakes/summary.csv",
        "predictions/simple/summary.json",
        "predictions/complex/summary.json",
        "report.json",
        "validation/random_draws.csv",
        "validation/feedback.json",
    ] {
        assert!(o.join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(o.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["methods"].as_array().unwrap().len(), 2);
    assert!(report["oracle_total_power"].as_f64().unwrap() > 0.0);
}

#[test]
fn elbow_writes_one_row_per_k() {
    let (tmp, cfg) = workspace("");
    let out = run(&["elbow", "--config", path(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("out/elbow.csv")).unwrap();
    // Header plus k = 2..=12.
    assert_eq!(csv.lines().count(), 1 + 11);
}

#[test]
fn stage_out_of_order_is_a_dependency_error() {
    let (tmp, cfg) = workspace("");
    let out = run(&["aggregate", "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model.json"), "{err}");

    assert!(run(&["cluster", "--config", path(&cfg)]).status.success());
    let out = run(&["aggregate", "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulate"));
    assert!(!tmp.path().join("out/predictions").exists());
}

#[test]
fn malformed_config_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("bad.json");
    fs::write(&spec, "{\"spec\": [1, 2").unwrap();
    let out = run(&["synth", "--config", path(&spec), "--out", path(&tmp.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));

    let (_tmp, cfg) = workspace(", \"clusters\": 3");
    let out = run(&["cluster", "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("clusters"));
}

#[test]
fn missing_config_flag_fails() {
    let out = run(&["cluster"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = |name: &str, seed: &str| {
        let d = tmp.path().join(name);
        let out = run(&["synth", "--config", path(&tiny_spec()), "--out", path(&d), "--seed", seed]);
        assert!(out.status.success());
        fs::read(d.join("data.bin")).unwrap()
    };
    let a = gen("a", "5");
    let b = gen("b", "5");
    let c = gen("c", "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn overrides_take_precedence() {
    let (tmp, cfg) = workspace("");
    let alt = tmp.path().join("alt");
    let out = run(&["cluster", "--config", path(&cfg), "--k", "3", "--out", path(&alt), "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(alt.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["k"], 3);
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn window_restricts_the_grid() {
    let (tmp, cfg) = workspace("");
    let out = run(&["cluster", "--config", path(&cfg), "--k", "2", "--window", "59.9,60.0,0.7,1.0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/model.json")).unwrap()).unwrap();
    assert!(model["k"] == 2);
    let out = run(&["cluster", "--config", path(&cfg), "--window", "10,11,0,1"]);
    assert_ne!(out.status.code(), Some(0));
}
