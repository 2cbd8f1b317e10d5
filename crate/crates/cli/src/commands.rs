//! One function per pipeline stage. Each stage reads the artifacts of the
//! stages before it from the output directory and writes its own under
//! fixed names.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use windregime::aggregate::{complex_sum, simple_sum, AggregationInputs, PredictionSummary};
use windregime::clustering::{elbow_scan, transition_matrix, ClusterModel, KMeansConfig};
use windregime::datamodel::{Channel, WeatherDataset};
use windregime::flowsim::{
    export_wake_result, import_result_dir, simulate_clusters, ExternalSolver, FlowSolver, InflowCondition,
    JensenSolver, WakeResult,
};
use windregime::ingest::{self, SynthConfig};
use windregime::validate::{compare, farm_feedback_recluster, power_curve_baseline, random_sample_benchmark, run_oracle};
use windregime::{LongTermPrediction, ValidationReport};

use crate::config::{RunConfig, SolverChoice};
use crate::failure::Failure;

pub const ELBOW_CSV: &str = "elbow.csv";
pub const MODEL_JSON: &str = "model.json";
pub const TRANSITIONS_CSV: &str = "transitions.csv";
pub const LABELS_CSV: &str = "labels.csv";
pub const WAKES_DIR: &str = "wakes";
pub const PREDICTIONS_DIR: &str = "predictions";
pub const REPORT_JSON: &str = "report.json";
pub const VALIDATION_DIR: &str = "validation";

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

/// Fails with a dependency error unless `path` exists.
fn require(path: &Path, producer: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Dependency(format!(
            "missing {} (run `windregime {producer}` first)",
            path.display()
        )))
    }
}

fn cluster_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("cluster_{i:02}"))
}

pub fn synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let text = fs::read_to_string(spec_path).map_err(|e| io_err(spec_path, e))?;
    let mut cfg: SynthConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("invalid synthetic spec {}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        cfg.spec.seed = s;
    }
    let (ds, regimes) = cfg.generate().map_err(|e| Failure::Config(e.to_string()))?;
    ingest::write_dataset(&ds, out)?;
    let mut csv = String::from("time,regime\n");
    for (t, r) in ds.times().iter().zip(&regimes) {
        let _ = writeln!(csv, "{},{r}", ingest::format_time(*t));
    }
    write_text(&out.join("regimes.csv"), &csv)?;
    log::info!("wrote {} days to {}", ds.len(), out.display());
    Ok(())
}

pub fn elbow(cfg: &RunConfig) -> Result<(), Failure> {
    let ds = cfg.load_dataset()?;
    let report = elbow_scan(&ds, &cfg.channel_refs(), &cfg.k_values(), cfg.seed)?;
    write_text(&cfg.out_dir().join(ELBOW_CSV), &report.to_csv())?;
    if let Some(k) = report.best_silhouette_k() {
        log::info!("highest silhouette at k = {k}");
    }
    Ok(())
}

pub fn cluster(cfg: &RunConfig) -> Result<(), Failure> {
    let ds = cfg.load_dataset()?;
    let model = KMeansConfig::new(cfg.k).seed(cfg.seed).fit(&ds, &cfg.channel_refs())?;
    let out = cfg.out_dir();
    write_text(&out.join(MODEL_JSON), &to_json(&model))?;
    let tm = transition_matrix(&model.labels, ds.times(), model.k)?;
    write_text(&out.join(TRANSITIONS_CSV), &tm.to_csv())?;
    let mut csv = String::from("time,label\n");
    for (t, l) in ds.times().iter().zip(&model.labels) {
        let _ = writeln!(csv, "{},{l}", ingest::format_time(*t));
    }
    write_text(&out.join(LABELS_CSV), &csv)?;
    log::info!("clustered {} days into {} clusters, inertia {}", ds.len(), model.k, model.inertia);
    Ok(())
}

fn load_model(cfg: &RunConfig, ds: &WeatherDataset) -> Result<ClusterModel, Failure> {
    let path = cfg.out_dir().join(MODEL_JSON);
    require(&path, "cluster")?;
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let model: ClusterModel = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("invalid model {}: {e}", path.display())))?;
    if model.n() != ds.len() || model.channels != cfg.channels {
        return Err(Failure::Config(format!(
            "{} was fitted on {} days of {:?}, but the configured dataset has {} days of {:?}; re-run `windregime cluster`",
            path.display(),
            model.n(),
            model.channels,
            ds.len(),
            cfg.channels
        )));
    }
    Ok(model)
}

fn solver(cfg: &RunConfig) -> Box<dyn FlowSolver> {
    match cfg.solver {
        SolverChoice::Jensen => Box::new(JensenSolver::default()),
        SolverChoice::External => Box::new(ExternalSolver::new(cfg.external_dir.clone().expect("checked at load"))),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let ds = cfg.load_dataset()?;
    let model = load_model(cfg, &ds)?;
    let farm = cfg.load_farm()?;
    let results = simulate_clusters(&model, &ds, &farm, solver(cfg).as_ref())?;
    let root = cfg.out_dir().join(WAKES_DIR);
    let mut csv = String::from("cluster,representative_time,farm_power_w\n");
    for (i, r) in results.iter().enumerate() {
        export_wake_result(r, &cluster_dir(&root, i))?;
        let _ = writeln!(csv, "{i},{},{}", ingest::format_time(r.timestamp), r.farm_power);
    }
    write_text(&root.join("summary.csv"), &csv)?;
    log::info!("{} solver runs", results.len());
    Ok(())
}

fn load_wakes(cfg: &RunConfig, ds: &WeatherDataset, model: &ClusterModel) -> Result<Vec<WakeResult>, Failure> {
    let root = cfg.out_dir().join(WAKES_DIR);
    model
        .representative_idx
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let dir = cluster_dir(&root, i);
            require(&dir.join(windregime::flowsim::POWER_SIDECAR), "simulate")?;
            let inflow = InflowCondition::from_dataset(ds, t)?;
            Ok(import_result_dir(&dir, &inflow)?)
        })
        .collect()
}

struct Predictions {
    labels: Vec<usize>,
    simple: LongTermPrediction,
    complex: LongTermPrediction,
}

fn predict(cfg: &RunConfig, ds: &WeatherDataset, model: &ClusterModel) -> Result<Predictions, Failure> {
    let results = load_wakes(cfg, ds, model)?;
    let farm = cfg.load_farm()?;
    let inputs = AggregationInputs::from_dataset(model, results, ds, cfg.period(ds)?, &farm)?;
    Ok(Predictions {
        simple: simple_sum(&inputs),
        complex: complex_sum(&inputs),
        labels: inputs.labels,
    })
}

pub fn aggregate(cfg: &RunConfig) -> Result<(), Failure> {
    let ds = cfg.load_dataset()?;
    let model = load_model(cfg, &ds)?;
    let p = predict(cfg, &ds, &model)?;
    let ts = ds.times()[cfg.period(&ds)?.start];
    let root = cfg.out_dir().join(PREDICTIONS_DIR);
    for pred in [&p.simple, &p.complex] {
        pred.write(&root.join(pred.method.as_str()), ts)?;
        log::info!("{} estimate: {:.6e} W*days", pred.method.as_str(), pred.total_power);
    }
    Ok(())
}

/// Checks that the stored prediction summary matches a recomputation.
fn check_summary(path: &Path, pred: &LongTermPrediction) -> Result<(), Failure> {
    require(path, "aggregate")?;
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let stored: PredictionSummary =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("invalid {}: {e}", path.display())))?;
    if stored != pred.summary() {
        return Err(Failure::Dependency(format!(
            "{} is out of date with the cluster wakes; re-run `windregime aggregate`",
            path.display()
        )));
    }
    Ok(())
}

pub fn validate(cfg: &RunConfig) -> Result<(), Failure> {
    let ds = cfg.load_dataset()?;
    let model = load_model(cfg, &ds)?;
    let p = predict(cfg, &ds, &model)?;
    let pred_root = cfg.out_dir().join(PREDICTIONS_DIR);
    check_summary(&pred_root.join("simple/summary.json"), &p.simple)?;
    check_summary(&pred_root.join("complex/summary.json"), &p.complex)?;

    let farm = cfg.load_farm()?;
    let period = cfg.period(&ds)?;
    let oracle = run_oracle(&ds, &farm, solver(cfg).as_ref(), period.clone())?;
    let runs = model.k;
    let mut report = ValidationReport::new(
        &oracle,
        vec![compare(&p.simple, &oracle, &p.labels, runs)?, compare(&p.complex, &oracle, &p.labels, runs)?],
    );
    let sample_size = cfg.sample_size.min(oracle.n_days());
    let bench = random_sample_benchmark(&oracle, cfg.random_draws, sample_size, cfg.seed)?;
    report.random_benchmark = Some(bench.summary);
    report.power_curve_baseline = Some(power_curve_baseline(&ds, &farm, period.clone())?);

    let out = cfg.out_dir();
    write_text(&out.join(REPORT_JSON), &report.to_json())?;
    let vdir = out.join(VALIDATION_DIR);
    let ts = ds.times()[period.start];
    let wake = || Channel::new("wake", "m/s");
    ingest::write_raster(&oracle.mean_wake(), wake(), ts, &vdir.join("oracle_mean_wake"))?;
    for (i, r) in oracle.per_cluster_mean_wake(&p.labels, model.k)?.iter().enumerate() {
        if let Some(r) = r {
            ingest::write_raster(r, wake(), ts, &cluster_dir(&vdir, i))?;
        }
    }
    let mut csv = String::from("draw,total_power_w_days\n");
    for (i, e) in bench.estimates.iter().enumerate() {
        let _ = writeln!(csv, "{i},{e}");
    }
    write_text(&vdir.join("random_draws.csv"), &csv)?;

    if cfg.feedback {
        let fb = farm_feedback_recluster(&ds, &oracle, model.k, cfg.seed)?;
        write_text(&vdir.join("feedback.json"), &to_json(&fb))?;
        for (i, r) in fb.centroid_speed_difference.iter().enumerate() {
            ingest::write_raster(
                r,
                Channel::new("speed_difference", "m/s"),
                ts,
                &vdir.join(format!("feedback_diff_{i:02}")),
            )?;
        }
        log::info!("farm feedback: {} of {} days change cluster", fb.changes, fb.n_days);
    }
    for m in &report.methods {
        log::info!(
            "{}: power error {:.3}%, mean cluster wake correlation {:.3}",
            m.method.as_str(),
            100.0 * m.power_rel_error,
            m.mean_cluster_correlation()
        );
    }
    Ok(())
}

pub fn run_all(cfg: &RunConfig) -> Result<(), Failure> {
    elbow(cfg)?;
    cluster(cfg)?;
    simulate(cfg)?;
    aggregate(cfg)?;
    validate(cfg)
}
