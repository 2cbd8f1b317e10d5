//! Scoring cluster-based estimates against an every-day reference.
//!
//! The oracle runs the solver once per day of a validation period. Cluster
//! predictions are compared with it on total power and on per-cluster mean
//! wake rasters. Two further experiments live here: a random-sampling
//! benchmark that draws a handful of oracle days many times, and a
//! farm-feedback check that re-clusters the validation year on wind fields
//! with and without the farm's wake.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{complex_sum, farm_center_wind, simple_sum, AggregationInputs, LongTermPrediction, Method};
use crate::clustering::{ClusterModel, KMeansConfig};
use crate::datamodel::{wind_speed_direction, Channel, Raster, WeatherDataset};
use crate::error::{ensure, Error, Result};
use crate::farm::{power_curve, FarmSpec};
use crate::flowsim::{simulate_clusters, simulate_day, FlowSolver, WakeResult, U_CHANNEL, V_CHANNEL};
use crate::stats::{mean_abs_error, pearson, quantile_sorted};

fn check_period(ds: &WeatherDataset, period: &Range<usize>) -> Result<()> {
    ensure!(
        period.start < period.end && period.end <= ds.len(),
        Range,
        "period {period:?} is not inside the {} days of the dataset",
        ds.len()
    );
    Ok(())
}

/// Solver output for every day of a validation period.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub period: Range<usize>,
    pub days: Vec<WakeResult>,
    /// Sum of daily farm power [W·days].
    pub total_power: f64,
    /// Solver invocations made.
    pub runs: usize,
}

impl OracleResult {
    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn per_day_power(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.farm_power).collect()
    }

    pub fn mean_wake(&self) -> Raster {
        let mut sum = Raster::zeros(*self.days[0].deficit.grid());
        for d in &self.days {
            sum.add_scaled(&d.deficit, 1.0).expect("oracle rasters share a grid");
        }
        sum.scaled(1.0 / self.n_days() as f64)
    }

    /// Mean wake over the days of each cluster; `None` for clusters with no
    /// day in the period.
    pub fn per_cluster_mean_wake(&self, labels: &[usize], k: usize) -> Result<Vec<Option<Raster>>> {
        ensure!(
            labels.len() == self.n_days(),
            Validation,
            "{} labels for {} oracle days",
            labels.len(),
            self.n_days()
        );
        ensure!(labels.iter().all(|&l| l < k), Validation, "label out of range for k={k}");
        let grid = *self.days[0].deficit.grid();
        let mut sums = vec![Raster::zeros(grid); k];
        let mut counts = vec![0usize; k];
        for (d, &l) in self.days.iter().zip(labels) {
            sums[l].add_scaled(&d.deficit, 1.0)?;
            counts[l] += 1;
        }
        Ok(sums
            .into_iter()
            .zip(counts)
            .map(|(s, c)| (c > 0).then(|| s.scaled(1.0 / c as f64)))
            .collect())
    }

    /// The oracle written as a prediction, for self-comparison.
    pub fn as_prediction(&self, labels: &[usize], k: usize) -> Result<LongTermPrediction> {
        let means = self.per_cluster_mean_wake(labels, k)?;
        let grid = *self.days[0].deficit.grid();
        let mut counts = vec![0usize; k];
        let mut per_cluster_power = vec![0.0; k];
        let mut wake_sum = Raster::zeros(grid);
        for (d, &l) in self.days.iter().zip(labels) {
            counts[l] += 1;
            per_cluster_power[l] += d.farm_power;
            wake_sum.add_scaled(&d.deficit, 1.0)?;
        }
        Ok(LongTermPrediction {
            method: Method::Oracle,
            n_days: self.n_days(),
            counts,
            total_power: self.total_power,
            per_cluster_power,
            mean_wake: self.mean_wake(),
            wake_sum,
            per_cluster_mean_wake: means.into_iter().map(|m| m.unwrap_or_else(|| Raster::zeros(grid))).collect(),
            degenerate_clusters: Vec::new(),
        })
    }
}

/// Runs the solver on every day in `period`. Days run in parallel; results
/// keep day order so the output does not depend on scheduling.
pub fn run_oracle(
    ds: &WeatherDataset,
    farm: &FarmSpec,
    solver: &dyn FlowSolver,
    period: Range<usize>,
) -> Result<OracleResult> {
    check_period(ds, &period)?;
    let days = period
        .clone()
        .into_par_iter()
        .map(|t| simulate_day(ds, t, farm, solver))
        .collect::<Result<Vec<_>>>()?;
    let total_power = days.iter().map(|d| d.farm_power).sum();
    Ok(OracleResult {
        runs: days.len(),
        period,
        days,
        total_power,
    })
}

/// Wake-free estimate: every turbine sees the farm-centre wind [W·days].
pub fn power_curve_baseline(ds: &WeatherDataset, farm: &FarmSpec, period: Range<usize>) -> Result<f64> {
    check_period(ds, &period)?;
    let n = farm.len() as f64;
    period
        .map(|t| Ok(n * power_curve(&farm.turbine, farm_center_wind(ds, t, farm.farm_center)?.speed)))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub n: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl DistributionSummary {
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "summary of an empty sample");
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let mean = s.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            n,
            min: s[0],
            q25: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q75: quantile_sorted(&s, 0.75),
            max: s[n - 1],
            mean,
            std: var.sqrt(),
        }
    }

    pub fn iqr_half_width(&self) -> f64 {
        0.5 * (self.q75 - self.q25)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomBenchmark {
    /// One total-power estimate per draw [W·days].
    pub estimates: Vec<f64>,
    pub summary: DistributionSummary,
}

/// Draws `sample_size` distinct oracle days `n_draws` times and scales each
/// draw's power sum by `days / sample_size`. Uses only cached oracle runs.
pub fn random_sample_benchmark(
    oracle: &OracleResult,
    n_draws: usize,
    sample_size: usize,
    seed: u64,
) -> Result<RandomBenchmark> {
    let days = oracle.n_days();
    ensure!(n_draws >= 1, Validation, "need at least one draw");
    ensure!(
        (1..=days).contains(&sample_size),
        Validation,
        "sample size {sample_size} must be within 1..={days}"
    );
    let power = oracle.per_day_power();
    let scale = days as f64 / sample_size as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let estimates: Vec<f64> = (0..n_draws)
        .map(|_| {
            let idx = rand::seq::index::sample(&mut rng, days, sample_size);
            scale * idx.iter().map(|i| power[i]).sum::<f64>()
        })
        .collect();
    let summary = DistributionSummary::of(&estimates);
    Ok(RandomBenchmark { estimates, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub cluster: usize,
    /// Validation days carrying this label.
    pub count: usize,
    pub mae: f64,
    /// Pearson correlation over all cells; 0 when undefined.
    pub correlation: f64,
    pub correlation_defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub total_power: f64,
    pub power_abs_error: f64,
    pub power_rel_error: f64,
    /// Clusters with at least one validation day.
    pub clusters: Vec<ClusterScore>,
    pub overall_mae: f64,
    pub overall_correlation: f64,
    pub overall_correlation_defined: bool,
    pub solver_runs: usize,
}

impl MethodReport {
    pub fn mean_cluster_correlation(&self) -> f64 {
        self.clusters.iter().map(|c| c.correlation).sum::<f64>() / self.clusters.len() as f64
    }
}

fn correlation_or_zero(a: &Raster, b: &Raster) -> (f64, bool) {
    match pearson(a.values(), b.values()) {
        Some(r) => (r, true),
        None => (0.0, false),
    }
}

/// Scores a prediction against the oracle under a day labelling.
/// `solver_runs` is recorded as given.
pub fn compare(
    pred: &LongTermPrediction,
    oracle: &OracleResult,
    labels: &[usize],
    solver_runs: usize,
) -> Result<MethodReport> {
    let grid = oracle.days[0].deficit.grid();
    ensure!(
        pred.mean_wake.grid() == grid && pred.per_cluster_mean_wake.iter().all(|r| r.grid() == grid),
        Validation,
        "prediction rasters are not on the oracle grid"
    );
    let k = pred.per_cluster_mean_wake.len();
    let truth = oracle.per_cluster_mean_wake(labels, k)?;
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let clusters = truth
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.as_ref().map(|t| (i, t)))
        .map(|(i, t)| {
            let p = &pred.per_cluster_mean_wake[i];
            let (correlation, correlation_defined) = correlation_or_zero(p, t);
            ClusterScore {
                cluster: i,
                count: counts[i],
                mae: mean_abs_error(p.values(), t.values()),
                correlation,
                correlation_defined,
            }
        })
        .collect();
    let oracle_mean = oracle.mean_wake();
    let (overall_correlation, overall_correlation_defined) = correlation_or_zero(&pred.mean_wake, &oracle_mean);
    let abs = (pred.total_power - oracle.total_power).abs();
    let rel = if oracle.total_power != 0.0 {
        abs / oracle.total_power.abs()
    } else if abs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MethodReport {
        method: pred.method,
        total_power: pred.total_power,
        power_abs_error: abs,
        power_rel_error: rel,
        clusters,
        overall_mae: mean_abs_error(pred.mean_wake.values(), oracle_mean.values()),
        overall_correlation,
        overall_correlation_defined,
        solver_runs,
    })
}

/// Cluster results and both predictions for one validation period.
#[derive(Debug, Clone)]
pub struct ClusterPipeline {
    pub results: Vec<WakeResult>,
    pub simple: LongTermPrediction,
    pub complex: LongTermPrediction,
    pub labels: Vec<usize>,
    pub solver_runs: usize,
}

/// One solver run per cluster representative, then both aggregations.
pub fn run_cluster_pipeline(
    model: &ClusterModel,
    ds: &WeatherDataset,
    farm: &FarmSpec,
    solver: &dyn FlowSolver,
    period: Range<usize>,
) -> Result<ClusterPipeline> {
    check_period(ds, &period)?;
    let results = simulate_clusters(model, ds, farm, solver)?;
    let solver_runs = results.len();
    let inputs = AggregationInputs::from_dataset(model, results.clone(), ds, period, farm)?;
    Ok(ClusterPipeline {
        simple: simple_sum(&inputs),
        complex: complex_sum(&inputs),
        labels: inputs.labels,
        results,
        solver_runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_days: usize,
    pub oracle_total_power: f64,
    pub oracle_runs: usize,
    pub methods: Vec<MethodReport>,
    /// Cluster runs as a fraction of oracle runs.
    pub run_fraction: f64,
    pub random_benchmark: Option<DistributionSummary>,
    pub power_curve_baseline: Option<f64>,
}

impl ValidationReport {
    pub fn new(oracle: &OracleResult, methods: Vec<MethodReport>) -> Self {
        let cluster_runs = methods.iter().map(|m| m.solver_runs).max().unwrap_or(0);
        Self {
            n_days: oracle.n_days(),
            oracle_total_power: oracle.total_power,
            oracle_runs: oracle.runs,
            run_fraction: cluster_runs as f64 / oracle.runs as f64,
            methods,
            random_benchmark: None,
            power_curve_baseline: None,
        }
    }

    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Optimal one-to-one matching of centroid sets `a` to `b`.
///
/// Returns `perm` with `a[i]` matched to `b[perm[i]]`, minimising the summed
/// Euclidean centroid distance. All `k!` permutations are searched (with
/// pruning); among equal costs the lexicographically first wins.
pub fn match_centroids(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let k = a.len();
    ensure!(k == b.len(), Validation, "centroid sets differ in size: {k} vs {}", b.len());
    ensure!(k <= 10, Validation, "exhaustive matching limited to k <= 10, got {k}");
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|x| b.iter().map(|y| crate::stats::squared_distance(x, y).sqrt()).collect())
        .collect();

    struct Search<'a> {
        cost: &'a [Vec<f64>],
        best: f64,
        best_perm: Vec<usize>,
        perm: Vec<usize>,
        used: Vec<bool>,
    }
    impl Search<'_> {
        fn go(&mut self, depth: usize, acc: f64) {
            if acc >= self.best {
                return;
            }
            if depth == self.cost.len() {
                self.best = acc;
                self.best_perm.clone_from(&self.perm);
                return;
            }
            for j in 0..self.cost.len() {
                if !self.used[j] {
                    self.used[j] = true;
                    self.perm.push(j);
                    self.go(depth + 1, acc + self.cost[depth][j]);
                    self.perm.pop();
                    self.used[j] = false;
                }
            }
        }
    }
    let mut s = Search {
        cost: &cost,
        best: f64::INFINITY,
        best_perm: Vec::new(),
        perm: Vec::with_capacity(k),
        used: vec![false; k],
    };
    s.go(0, 0.0);
    Ok((s.best_perm, s.best))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelChange {
    pub day: usize,
    /// Label in the first clustering.
    pub from: usize,
    /// Label in the second clustering, mapped back to the first's numbering.
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackReport {
    pub k: usize,
    pub seed: u64,
    pub n_days: usize,
    pub changes: usize,
    pub changed_days: Vec<LabelChange>,
    /// Cluster `i` of the first clustering matches `matching[i]` of the second.
    pub matching: Vec<usize>,
    pub matching_cost: f64,
    pub labels_a: Vec<usize>,
    pub labels_b: Vec<usize>,
    /// Per first-clustering cluster: matched second centroid speed minus
    /// first centroid speed [m/s].
    #[serde(skip)]
    pub centroid_speed_difference: Vec<Raster>,
}

/// Clusters two datasets over the same days with identical settings and
/// counts days whose permutation-matched label differs.
pub fn recluster_compare(a: &WeatherDataset, b: &WeatherDataset, k: usize, seed: u64) -> Result<FeedbackReport> {
    ensure!(
        a.len() == b.len() && a.grid() == b.grid(),
        Validation,
        "datasets must share days and grid"
    );
    let channels = [U_CHANNEL, V_CHANNEL];
    let cfg = KMeansConfig::new(k).seed(seed);
    let ma = cfg.fit(a, &channels)?;
    let mb = cfg.fit(b, &channels)?;
    let (matching, matching_cost) = match_centroids(&ma.centroids, &mb.centroids)?;
    let mut inverse = vec![0; k];
    for (i, &j) in matching.iter().enumerate() {
        inverse[j] = i;
    }
    let changed_days: Vec<LabelChange> = ma
        .labels
        .iter()
        .zip(&mb.labels)
        .enumerate()
        .filter(|(_, (&la, &lb))| matching[la] != lb)
        .map(|(day, (&la, &lb))| LabelChange {
            day,
            from: la,
            to: inverse[lb],
        })
        .collect();
    let grid = *a.grid();
    let cells = grid.cells();
    let speed = |c: &[f64]| -> Vec<f64> {
        (0..cells).map(|q| wind_speed_direction(c[q], c[cells + q]).0).collect()
    };
    let centroid_speed_difference = (0..k)
        .map(|i| {
            let sa = speed(&ma.centroids[i]);
            let sb = speed(&mb.centroids[matching[i]]);
            Raster::new(grid, sb.iter().zip(&sa).map(|(x, y)| x - y).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeedbackReport {
        k,
        seed,
        n_days: a.len(),
        changes: changed_days.len(),
        changed_days,
        matching,
        matching_cost,
        labels_a: ma.labels,
        labels_b: mb.labels,
        centroid_speed_difference,
    })
}

/// The inflow wind field of each oracle day, and the same field slowed by
/// that day's wake deficit.
pub fn farm_feedback_datasets(ds: &WeatherDataset, oracle: &OracleResult) -> Result<(WeatherDataset, WeatherDataset)> {
    let grid = *ds.grid();
    let cells = grid.cells();
    ensure!(
        oracle.days[0].deficit.grid() == &grid,
        Validation,
        "oracle rasters are not on the dataset grid"
    );
    ensure!(oracle.period.end <= ds.len(), Range, "oracle period outside dataset");
    let mut clean = Vec::with_capacity(oracle.n_days() * 2 * cells);
    let mut waked = Vec::with_capacity(clean.capacity());
    for (t, day) in oracle.period.clone().zip(&oracle.days) {
        let u = ds.channel_slice(t, U_CHANNEL)?;
        let v = ds.channel_slice(t, V_CHANNEL)?;
        let d = day.deficit.values();
        clean.extend_from_slice(u);
        clean.extend_from_slice(v);
        let factor: Vec<f64> = (0..cells)
            .map(|q| {
                let s = wind_speed_direction(u[q], v[q]).0;
                if d[q] == 0.0 || s == 0.0 {
                    1.0
                } else {
                    ((s - d[q]) / s).max(0.0)
                }
            })
            .collect();
        for comp in [u, v] {
            waked.extend(comp.iter().zip(&factor).map(|(x, f)| if *f == 1.0 { *x } else { x * f }));
        }
    }
    let channels = vec![Channel::new(U_CHANNEL, "m/s"), Channel::new(V_CHANNEL, "m/s")];
    let times = ds.times()[oracle.period.clone()].to_vec();
    Ok((
        WeatherDataset::new(grid, channels.clone(), times.clone(), clean)?,
        WeatherDataset::new(grid, channels, times, waked)?,
    ))
}

/// Re-clusters the validation period with and without the farm's wake.
pub fn farm_feedback_recluster(ds: &WeatherDataset, oracle: &OracleResult, k: usize, seed: u64) -> Result<FeedbackReport> {
    let (clean, waked) = farm_feedback_datasets(ds, oracle)?;
    recluster_compare(&clean, &waked, k, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{GridSpec, Timestamp};
    use crate::farm::{default_farm, TurbineSpec};
    use crate::flowsim::{CountingSolver, JensenSolver};
    use approx::assert_relative_eq;
    use chrono::{Duration, TimeZone};

    fn start() -> Timestamp {
        chrono::Utc.with_ymd_and_hms(2007, 1, 1, 12, 0, 0).unwrap()
    }

    fn grid() -> GridSpec {
        GridSpec::from_bounds(59.6, 60.4, 0.2, 1.8, 9, 9).unwrap()
    }

    /// Uniform-in-space dataset with one (u, v) per day.
    fn uniform_ds(winds: &[(f64, f64)]) -> WeatherDataset {
        let g = grid();
        let mut data = Vec::new();
        for &(u, v) in winds {
            data.extend(std::iter::repeat_n(u, g.cells()));
            data.extend(std::iter::repeat_n(v, g.cells()));
        }
        let times = (0..winds.len()).map(|d| start() + Duration::days(d as i64)).collect();
        WeatherDataset::new(g, vec![Channel::new("u100", "m/s"), Channel::new("v100", "m/s")], times, data).unwrap()
    }

    fn small_farm() -> FarmSpec {
        let f = default_farm();
        FarmSpec::new(crate::farm::square_array(3, 882.0), f.turbine, f.farm_center).unwrap()
    }

    #[test]
    fn oracle_one_day_and_counts() {
        let ds = uniform_ds(&[(8.0, 1.0), (3.0, -6.0), (12.0, 0.0)]);
        let farm = small_farm();
        let solver = CountingSolver::new(JensenSolver::default());
        let o = run_oracle(&ds, &farm, &solver, 1..2).unwrap();
        let direct = simulate_day(&ds, 1, &farm, &JensenSolver::default()).unwrap();
        assert_eq!(o.total_power, direct.farm_power);
        assert_eq!(o.days[0], direct);
        assert_eq!(solver.calls(), 1);
        solver.reset();
        let all = run_oracle(&ds, &farm, &solver, 0..3).unwrap();
        assert_eq!((all.runs, solver.calls()), (3, 3));
        assert!(run_oracle(&ds, &farm, &solver, 2..5).is_err());
    }

    #[test]
    fn calm_year_has_no_power() {
        let ds = uniform_ds(&[(0.0, 0.0); 5]);
        let o = run_oracle(&ds, &small_farm(), &JensenSolver::default(), 0..5).unwrap();
        assert_eq!(o.total_power, 0.0);
    }

    #[test]
    fn baseline_cases() {
        let farm = default_farm();
        let rated = uniform_ds(&vec![(11.4, 0.0); 365]);
        assert_relative_eq!(power_curve_baseline(&rated, &farm, 0..365).unwrap(), 365.0 * 5e8, max_relative = 1e-12);
        let slow = uniform_ds(&vec![(0.0, 2.0); 365]);
        assert_eq!(power_curve_baseline(&slow, &farm, 0..365).unwrap(), 0.0);
        // Spreadsheet-style: cubic ramp written out by hand.
        let speeds = [2.0, 5.0, 7.2, 11.4, 13.0, 26.0];
        let ds = uniform_ds(&speeds.iter().map(|&s| (0.0, s)).collect::<Vec<_>>());
        let by_hand: f64 = speeds
            .iter()
            .map(|&s| {
                let p = if s < 3.0 || s > 25.0 {
                    0.0
                } else if s >= 11.4 {
                    5e6
                } else {
                    5e6 * (s.powi(3) - 27.0) / (11.4f64.powi(3) - 27.0)
                };
                100.0 * p
            })
            .sum();
        assert_relative_eq!(power_curve_baseline(&ds, &farm, 0..6).unwrap(), by_hand, max_relative = 1e-12);
    }

    fn fake_oracle(power: &[f64]) -> OracleResult {
        let g = grid();
        let days = power
            .iter()
            .map(|&p| WakeResult {
                deficit: Raster::zeros(g),
                farm_power: p,
                per_turbine_power: Vec::new(),
                per_turbine_speed: Vec::new(),
                per_turbine_drag: Vec::new(),
                timestamp: start(),
            })
            .collect();
        OracleResult {
            period: 0..power.len(),
            days,
            total_power: power.iter().sum(),
            runs: power.len(),
        }
    }

    #[test]
    fn random_benchmark_cases() {
        let power: Vec<f64> = (0..30).map(|i| (i * i % 17) as f64 * 1e7).collect();
        let o = fake_oracle(&power);
        let full = random_sample_benchmark(&o, 20, 30, 1).unwrap();
        for e in &full.estimates {
            assert_relative_eq!(*e, o.total_power, max_relative = 1e-12);
        }
        let flat = random_sample_benchmark(&fake_oracle(&[3e8; 40]), 50, 6, 2).unwrap();
        assert_relative_eq!(flat.summary.max, flat.summary.min, max_relative = 1e-12);
        assert_eq!(random_sample_benchmark(&o, 365, 6, 3).unwrap().estimates.len(), 365);
        assert!(random_sample_benchmark(&o, 10, 31, 3).is_err());
        assert_eq!(random_sample_benchmark(&o, 10, 6, 9).unwrap(), random_sample_benchmark(&o, 10, 6, 9).unwrap());
    }

    #[test]
    fn random_benchmark_is_unbiased() {
        let power: Vec<f64> = (0..365).map(|i| ((i * 7919) % 101) as f64 * 4e6).collect();
        let o = fake_oracle(&power);
        let b = random_sample_benchmark(&o, 10_000, 6, 11).unwrap();
        let se = b.summary.std / (10_000f64).sqrt();
        assert!((b.summary.mean - o.total_power).abs() < 3.0 * se, "{} vs {}", b.summary.mean, o.total_power);
    }

    #[test]
    fn distribution_summary_quantiles() {
        let s = DistributionSummary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((s.min, s.q25, s.median, s.q75, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(s.iqr_half_width(), 1.0);
        assert_relative_eq!(s.std, 2.5f64.sqrt());
    }

    fn varied_ds(n: usize) -> WeatherDataset {
        let winds: Vec<(f64, f64)> = (0..n)
            .map(|d| {
                let a = d as f64 * 2.399;
                let s = 5.0 + (d % 7) as f64;
                (s * a.cos(), s * a.sin())
            })
            .collect();
        uniform_ds(&winds)
    }

    #[test]
    fn self_comparison_is_exact() {
        let ds = varied_ds(12);
        let farm = small_farm();
        let o = run_oracle(&ds, &farm, &JensenSolver::default(), 0..12).unwrap();
        let labels: Vec<usize> = (0..12).map(|d| d % 3).collect();
        let p = o.as_prediction(&labels, 3).unwrap();
        let r = compare(&p, &o, &labels, 12).unwrap();
        assert_eq!(r.power_abs_error, 0.0);
        assert_eq!(r.overall_mae, 0.0);
        for c in &r.clusters {
            assert_eq!(c.mae, 0.0);
            assert!(c.correlation_defined);
            assert_relative_eq!(c.correlation, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_wake_correlation_flagged() {
        let ds = varied_ds(6);
        let o = run_oracle(&ds, &small_farm(), &JensenSolver::default(), 0..6).unwrap();
        let labels = vec![0; 6];
        let mut p = o.as_prediction(&labels, 1).unwrap();
        p.per_cluster_mean_wake[0] = Raster::zeros(*p.mean_wake.grid());
        let r = compare(&p, &o, &labels, 1).unwrap();
        assert_eq!(r.clusters[0].correlation, 0.0);
        assert!(!r.clusters[0].correlation_defined);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let ds = varied_ds(4);
        let o = run_oracle(&ds, &small_farm(), &JensenSolver::default(), 0..4).unwrap();
        let labels = vec![0; 4];
        let mut p = o.as_prediction(&labels, 1).unwrap();
        let other = GridSpec::from_bounds(59.0, 61.0, 0.0, 2.0, 9, 9).unwrap();
        p.mean_wake = Raster::zeros(other);
        assert!(compare(&p, &o, &labels, 1).is_err());
    }

    #[test]
    fn pipeline_run_accounting() {
        let ds = varied_ds(30);
        let farm = small_farm();
        let model = KMeansConfig::new(4).seed(3).fit(&ds, &["u100", "v100"]).unwrap();
        let solver = CountingSolver::new(JensenSolver::default());
        let p = run_cluster_pipeline(&model, &ds, &farm, &solver, 0..30).unwrap();
        assert_eq!((p.solver_runs, solver.calls()), (4, 4));
        let o = run_oracle(&ds, &farm, &solver, 0..30).unwrap();
        assert_eq!(solver.calls(), 34);
        let report = ValidationReport::new(
            &o,
            vec![compare(&p.simple, &o, &p.labels, 4).unwrap(), compare(&p.complex, &o, &p.labels, 4).unwrap()],
        );
        assert_relative_eq!(report.run_fraction, 4.0 / 30.0);
        let back: ValidationReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn matching_finds_permutation() {
        let a = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]];
        let b = vec![a[2].clone(), a[0].clone(), a[1].clone()];
        let (perm, cost) = match_centroids(&a, &b).unwrap();
        assert_eq!(perm, vec![1, 2, 0]);
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn matching_agrees_with_full_enumeration() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let k = 5;
            let mk = |rng: &mut ChaCha8Rng| (0..k).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect::<Vec<_>>();
            let (a, b) = (mk(&mut rng), mk(&mut rng));
            let (_, cost) = match_centroids(&a, &b).unwrap();
            // Enumerate all 120 permutations via factorial number system.
            let mut best = f64::INFINITY;
            for code in 0..120usize {
                let mut pool: Vec<usize> = (0..k).collect();
                let mut c = code;
                let mut total = 0.0;
                for (i, base) in (1..=k).rev().enumerate() {
                    let j = pool.remove(c % base);
                    c /= base;
                    total += crate::stats::squared_distance(&a[i], &b[j]).sqrt();
                }
                best = best.min(total);
            }
            assert_relative_eq!(cost, best, max_relative = 1e-12);
        }
    }

    #[test]
    fn feedback_zero_thrust_and_identity() {
        let ds = varied_ds(40);
        let farm = small_farm();
        let ghost = farm.with_turbine(TurbineSpec::default().with_constant_thrust(0.0));
        let o = run_oracle(&ds, &ghost, &JensenSolver::default(), 0..40).unwrap();
        let r = farm_feedback_recluster(&ds, &o, 4, 7).unwrap();
        assert_eq!(r.changes, 0);
        assert!(r.centroid_speed_difference.iter().all(|d| d.values().iter().all(|&x| x == 0.0)));
        let same = recluster_compare(&ds, &ds, 5, 1).unwrap();
        assert_eq!(same.changes, 0);
        assert_eq!(same.matching, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn feedback_symmetric_and_runs() {
        let ds = varied_ds(60);
        let farm = small_farm();
        let o = run_oracle(&ds, &farm, &JensenSolver::default(), 0..60).unwrap();
        let (clean, waked) = farm_feedback_datasets(&ds, &o).unwrap();
        let ab = recluster_compare(&clean, &waked, 4, 2).unwrap();
        let ba = recluster_compare(&waked, &clean, 4, 2).unwrap();
        assert_eq!(ab.changes, ba.changes);
        assert_eq!(ab.changed_days.len(), ab.changes);
        for c in &ab.changed_days {
            assert_ne!(c.from, c.to);
        }
    }
}
