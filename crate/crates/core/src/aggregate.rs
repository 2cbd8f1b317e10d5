//! Long-term power and wake estimates from per-cluster solver results.
//!
//! The simple estimate weights each cluster's result by its occupancy. The
//! complex estimate corrects the cluster result per datapoint: power and
//! wake are scaled by the ratio of the datapoint's farm-centre speed to the
//! representative's, the per-datapoint power is capped at the farm rating,
//! and the wake raster is rotated by the difference in farm-centre flow
//! angle. All winds come from the farm-absent input data.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::datamodel::{wind_speed_direction, Channel, LatLon, Raster, Timestamp, WeatherDataset};
use crate::error::{ensure, Error, Result};
use crate::farm::FarmSpec;
use crate::flowsim::{WakeResult, U_CHANNEL, V_CHANNEL};
use crate::ingest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Simple,
    Complex,
    /// Every day simulated; the reference the other two are scored against.
    Oracle,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Simple => "simple",
            Method::Complex => "complex",
            Method::Oracle => "oracle",
        }
    }
}

/// Farm-centre wind as speed [m/s] and flow angle [rad].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wind {
    pub speed: f64,
    pub theta: f64,
}

impl Wind {
    pub fn from_uv(u: f64, v: f64) -> Self {
        let (speed, theta) = wind_speed_direction(u, v);
        Self { speed, theta }
    }
}

/// Wind at the grid node nearest `center` on day `t`.
pub fn farm_center_wind(ds: &WeatherDataset, t: usize, center: LatLon) -> Result<Wind> {
    let (i, j) = ds.grid().nearest_cell(center).ok_or_else(|| {
        Error::Range(format!(
            "farm centre ({}, {}) lies outside the dataset grid",
            center.lat, center.lon
        ))
    })?;
    let k = i * ds.grid().n_lon() + j;
    let u = ds.channel_slice(t, U_CHANNEL)?[k];
    let v = ds.channel_slice(t, V_CHANNEL)?[k];
    Ok(Wind::from_uv(u, v))
}

/// Everything the aggregation formulas consume.
#[derive(Debug, Clone)]
pub struct AggregationInputs {
    /// Cluster of each datapoint in the aggregation period.
    pub labels: Vec<usize>,
    /// Farm-centre wind of each datapoint.
    pub day_wind: Vec<Wind>,
    /// Solver result per cluster, from its representative datapoint.
    pub results: Vec<WakeResult>,
    /// Farm-centre wind of each cluster's representative.
    pub cluster_wind: Vec<Wind>,
    pub rated_farm_power: f64,
    /// Point the wake rotation pivots on.
    pub rotation_center: LatLon,
}

impl AggregationInputs {
    pub fn new(
        labels: Vec<usize>,
        day_wind: Vec<Wind>,
        results: Vec<WakeResult>,
        cluster_wind: Vec<Wind>,
        rated_farm_power: f64,
        rotation_center: LatLon,
    ) -> Result<Self> {
        let k = results.len();
        ensure!(k >= 1, Validation, "need at least one cluster result");
        ensure!(
            cluster_wind.len() == k,
            Validation,
            "{} cluster winds for {k} cluster results",
            cluster_wind.len()
        );
        ensure!(!labels.is_empty(), Validation, "aggregation period is empty");
        ensure!(
            labels.len() == day_wind.len(),
            Validation,
            "{} labels but {} datapoint winds",
            labels.len(),
            day_wind.len()
        );
        ensure!(
            labels.iter().all(|&l| l < k),
            Validation,
            "label out of range for {k} clusters"
        );
        let grid = results[0].deficit.grid();
        ensure!(
            results.iter().all(|r| r.deficit.grid() == grid),
            Validation,
            "cluster wake rasters are on different grids"
        );
        ensure!(
            grid.contains(rotation_center),
            Range,
            "rotation centre lies outside the wake grid"
        );
        ensure!(
            day_wind
                .iter()
                .chain(&cluster_wind)
                .all(|w| w.speed.is_finite() && w.theta.is_finite()),
            Validation,
            "winds must be finite"
        );
        ensure!(rated_farm_power > 0.0, Validation, "rated farm power must be positive");
        Ok(Self {
            labels,
            day_wind,
            results,
            cluster_wind,
            rated_farm_power,
            rotation_center,
        })
    }

    /// Builds inputs for the days `period` of `ds`, using labels from a model
    /// fitted on the same dataset.
    pub fn from_dataset(
        model: &ClusterModel,
        results: Vec<WakeResult>,
        ds: &WeatherDataset,
        period: Range<usize>,
        farm: &FarmSpec,
    ) -> Result<Self> {
        ensure!(
            model.n() == ds.len(),
            Validation,
            "model labels {} datapoints, dataset has {}",
            model.n(),
            ds.len()
        );
        ensure!(
            period.start < period.end && period.end <= ds.len(),
            Range,
            "period {period:?} invalid for {} days",
            ds.len()
        );
        let center = farm.farm_center;
        let day_wind = period
            .clone()
            .map(|t| farm_center_wind(ds, t, center))
            .collect::<Result<Vec<_>>>()?;
        let cluster_wind = model
            .representative_idx
            .iter()
            .map(|&t| farm_center_wind(ds, t, center))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            model.labels[period].to_vec(),
            day_wind,
            results,
            cluster_wind,
            farm.rated_power(),
            center,
        )
    }

    pub fn k(&self) -> usize {
        self.results.len()
    }

    pub fn n_days(&self) -> usize {
        self.labels.len()
    }

    /// Datapoints per cluster, `N_i`.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    fn grid(&self) -> &crate::datamodel::GridSpec {
        self.results[0].deficit.grid()
    }

    /// Speed ratio for datapoint `j`, or `None` if its cluster's
    /// representative is calm.
    fn ratio(&self, j: usize) -> Option<f64> {
        let ui = self.cluster_wind[self.labels[j]].speed;
        (ui > 0.0).then(|| self.day_wind[j].speed / ui)
    }

    /// Clusters whose representative is calm but which have members.
    pub fn degenerate_clusters(&self) -> Vec<usize> {
        let counts = self.counts();
        (0..self.k())
            .filter(|&i| counts[i] > 0 && self.cluster_wind[i].speed <= 0.0)
            .collect()
    }
}

/// Long-term estimate of power and wake for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct LongTermPrediction {
    pub method: Method,
    pub n_days: usize,
    pub counts: Vec<usize>,
    /// Sum over datapoints of per-day farm power [W·days].
    pub total_power: f64,
    /// Contribution of each cluster to `total_power` [W·days].
    pub per_cluster_power: Vec<f64>,
    /// Sum over datapoints of the wake raster [m/s·days].
    pub wake_sum: Raster,
    /// `wake_sum / n_days` [m/s].
    pub mean_wake: Raster,
    /// Mean wake over each cluster's datapoints [m/s].
    pub per_cluster_mean_wake: Vec<Raster>,
    /// Clusters with a calm representative, aggregated uncorrected.
    pub degenerate_clusters: Vec<usize>,
}

impl LongTermPrediction {
    /// Mean daily farm power [W].
    pub fn mean_power(&self) -> f64 {
        self.total_power / self.n_days as f64
    }
}

/// Occupancy-weighted sum: `sum_i N_i Y_i` for power and wake.
pub fn simple_sum(inputs: &AggregationInputs) -> LongTermPrediction {
    let counts = inputs.counts();
    let mut wake_sum = Raster::zeros(*inputs.grid());
    let mut per_cluster_power = Vec::with_capacity(inputs.k());
    for (i, r) in inputs.results.iter().enumerate() {
        let n = counts[i] as f64;
        per_cluster_power.push(n * r.farm_power);
        wake_sum.add_scaled(&r.deficit, n).expect("grids checked");
    }
    let n_days = inputs.n_days();
    LongTermPrediction {
        method: Method::Simple,
        n_days,
        total_power: per_cluster_power.iter().sum(),
        per_cluster_power,
        mean_wake: wake_sum.scaled(1.0 / n_days as f64),
        wake_sum,
        per_cluster_mean_wake: inputs.results.iter().map(|r| r.deficit.clone()).collect(),
        counts,
        degenerate_clusters: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerEstimate {
    pub total_power: f64,
    pub per_cluster_power: Vec<f64>,
    /// Corrected power term of every datapoint [W].
    pub per_day_power: Vec<f64>,
    pub degenerate_clusters: Vec<usize>,
}

/// Speed-ratio corrected power, each datapoint's term capped at the farm
/// rating. Calm-representative clusters fall back to the uncorrected
/// cluster power.
pub fn complex_power(inputs: &AggregationInputs) -> PowerEstimate {
    let degenerate = inputs.degenerate_clusters();
    for &i in &degenerate {
        log::warn!("cluster {i} has a calm representative; its members use the uncorrected power");
    }
    let mut per_cluster_power = vec![0.0; inputs.k()];
    let per_day_power: Vec<f64> = (0..inputs.n_days())
        .map(|j| {
            let i = inputs.labels[j];
            let p = inputs.results[i].farm_power;
            let term = match inputs.ratio(j) {
                Some(ratio) => (ratio * p).min(inputs.rated_farm_power),
                None => p,
            };
            per_cluster_power[i] += term;
            term
        })
        .collect();
    PowerEstimate {
        total_power: per_day_power.iter().sum(),
        per_cluster_power,
        per_day_power,
        degenerate_clusters: degenerate,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WakeEstimate {
    pub wake_sum: Raster,
    pub mean_wake: Raster,
    pub per_cluster_mean_wake: Vec<Raster>,
    pub degenerate_clusters: Vec<usize>,
}

/// Rotates a raster by `dtheta` (counter-clockwise) about `center`.
///
/// Each output cell takes the bilinear sample of `w` at its position rotated
/// by `-dtheta` in local meter coordinates; samples falling outside the grid
/// are zero. A zero angle returns the input unchanged.
pub fn rotate_wake(w: &Raster, dtheta: f64, center: LatLon) -> Raster {
    if dtheta == 0.0 {
        return w.clone();
    }
    let mut out = vec![0.0; w.values().len()];
    rotate_accumulate(&mut out, w, dtheta, center, 1.0);
    Raster::new(*w.grid(), out).expect("rotation preserves finiteness")
}

/// Adds `scale * rotate_wake(w, dtheta, center)` into `out`.
///
/// The local frame is linear in the grid indices, so the source position of
/// each output cell is an affine function of its `(row, col)` and can be
/// stepped along a row instead of converted per cell.
pub fn rotate_accumulate(out: &mut [f64], w: &Raster, dtheta: f64, center: LatLon, scale: f64) {
    let grid = w.grid();
    let src = w.values();
    debug_assert_eq!(out.len(), src.len());
    if dtheta == 0.0 {
        for (o, v) in out.iter_mut().zip(src) {
            *o += scale * v;
        }
        return;
    }
    let (m_lat, m_lon) = grid.meters_per_degree();
    // Cell sizes in meters and the fractional index of the pivot.
    let dy = grid.d_lat() * m_lat;
    let dx = grid.d_lon() * m_lon;
    let (ci, cj) = grid.fractional_index(center);
    let (c, s) = (dtheta.cos(), dtheta.sin());
    let (n_lat, n_lon) = (grid.n_lat(), grid.n_lon());
    let Some((lo_i, hi_i, lo_j, hi_j)) = support(w) else {
        return;
    };
    // Source index increments per output column.
    let (step_i, step_j) = (-s * dx / dy, c);
    let x0 = -cj * dx;
    for i in 0..n_lat {
        let y = (i as f64 - ci) * dy;
        let fi0 = ci + (-x0 * s + y * c) / dy;
        let fj0 = cj + (x0 * c + y * s) / dx;
        // Columns whose source can fall inside the support, padded by one
        // against rounding; the exact test happens per cell.
        let (a, b) = column_range(fi0, step_i, lo_i, hi_i);
        let (e, f) = column_range(fj0, step_j, lo_j, hi_j);
        let start = a.max(e).max(0.0).floor() as usize;
        let end = ((b.min(f) + 1.0).min((n_lon - 1) as f64)).max(-1.0);
        if end < start as f64 {
            continue;
        }
        let row = &mut out[i * n_lon..(i + 1) * n_lon];
        for (j, o) in row.iter_mut().enumerate().take(end as usize + 1).skip(start.saturating_sub(1)) {
            let fi = fi0 + step_i * j as f64;
            let fj = fj0 + step_j * j as f64;
            if fi >= lo_i && fj >= lo_j && fi <= hi_i && fj <= hi_j {
                // Clamp the lower corner so the far edge interpolates with t = 1.
                let i0 = (fi as usize).min(n_lat.saturating_sub(2));
                let j0 = (fj as usize).min(n_lon.saturating_sub(2));
                let i1 = (i0 + 1).min(n_lat - 1);
                let j1 = (j0 + 1).min(n_lon - 1);
                let (ti, tj) = (fi - i0 as f64, fj - j0 as f64);
                let top = src[i0 * n_lon + j0] * (1.0 - tj) + src[i0 * n_lon + j1] * tj;
                let bottom = src[i1 * n_lon + j0] * (1.0 - tj) + src[i1 * n_lon + j1] * tj;
                *o += scale * (top * (1.0 - ti) + bottom * ti);
            }
        }
    }
}

/// Fractional-index box outside which bilinear samples of `w` are zero,
/// clipped to the grid. `None` for an all-zero raster.
fn support(w: &Raster) -> Option<(f64, f64, f64, f64)> {
    let g = w.grid();
    let n_lon = g.n_lon();
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for (k, &v) in w.values().iter().enumerate() {
        if v != 0.0 {
            let (r, c) = (k / n_lon, k % n_lon);
            r0 = r0.min(r);
            r1 = r1.max(r);
            c0 = c0.min(c);
            c1 = c1.max(c);
        }
    }
    if r0 == usize::MAX {
        return None;
    }
    let max_i = (g.n_lat() - 1) as f64;
    let max_j = (n_lon - 1) as f64;
    Some((
        (r0 as f64 - 1.0).max(0.0),
        (r1 as f64 + 1.0).min(max_i),
        (c0 as f64 - 1.0).max(0.0),
        (c1 as f64 + 1.0).min(max_j),
    ))
}

/// Interval of `j` with `a + b * j` in `[lo, hi]`.
fn column_range(a: f64, b: f64, lo: f64, hi: f64) -> (f64, f64) {
    if b.abs() < 1e-12 {
        if a >= lo - 1e-9 && a <= hi + 1e-9 {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (f64::INFINITY, f64::NEG_INFINITY)
        }
    } else {
        let (p, q) = ((lo - a) / b, (hi - a) / b);
        (p.min(q), p.max(q))
    }
}

/// Days summed sequentially per block; blocks combine in order, so the
/// result does not depend on the thread count.
const DAY_BLOCK: usize = 32;

/// Speed-ratio scaled, angle-rotated wake: `sum_j (u_j/u_i) f(W_i; theta_i, theta_j)`.
/// Calm datapoints contribute nothing; calm-representative clusters add
/// their raster uncorrected.
pub fn complex_wake(inputs: &AggregationInputs) -> WakeEstimate {
    let grid = *inputs.grid();
    let cells = grid.cells();
    let k = inputs.k();
    let degenerate = inputs.degenerate_clusters();
    let days: Vec<usize> = (0..inputs.n_days()).collect();
    let blocks: Vec<Vec<Vec<f64>>> = days
        .par_chunks(DAY_BLOCK)
        .map(|chunk| {
            let mut per_cluster = vec![vec![0.0; cells]; k];
            for &j in chunk {
                let i = inputs.labels[j];
                let w = &inputs.results[i].deficit;
                match inputs.ratio(j) {
                    None => rotate_accumulate(&mut per_cluster[i], w, 0.0, inputs.rotation_center, 1.0),
                    Some(0.0) => {}
                    Some(r) => {
                        let dtheta = inputs.day_wind[j].theta - inputs.cluster_wind[i].theta;
                        rotate_accumulate(&mut per_cluster[i], w, dtheta, inputs.rotation_center, r);
                    }
                }
            }
            per_cluster
        })
        .collect();
    let mut per_cluster = vec![vec![0.0; cells]; k];
    for block in &blocks {
        for (acc, part) in per_cluster.iter_mut().zip(block) {
            acc.iter_mut().zip(part).for_each(|(a, b)| *a += b);
        }
    }
    let mut wake_sum = Raster::zeros(grid);
    let counts = inputs.counts();
    let per_cluster_mean_wake = per_cluster
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let s = Raster::new(grid, s).expect("finite sums");
            wake_sum.add_scaled(&s, 1.0).expect("same grid");
            if counts[i] > 0 {
                s.scaled(1.0 / counts[i] as f64)
            } else {
                inputs.results[i].deficit.clone()
            }
        })
        .collect();
    WakeEstimate {
        mean_wake: wake_sum.scaled(1.0 / inputs.n_days() as f64),
        wake_sum,
        per_cluster_mean_wake,
        degenerate_clusters: degenerate,
    }
}

/// Complex power and complex wake together.
pub fn complex_sum(inputs: &AggregationInputs) -> LongTermPrediction {
    let power = complex_power(inputs);
    let wake = complex_wake(inputs);
    LongTermPrediction {
        method: Method::Complex,
        n_days: inputs.n_days(),
        counts: inputs.counts(),
        total_power: power.total_power,
        per_cluster_power: power.per_cluster_power,
        wake_sum: wake.wake_sum,
        mean_wake: wake.mean_wake,
        per_cluster_mean_wake: wake.per_cluster_mean_wake,
        degenerate_clusters: power.degenerate_clusters,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub count: usize,
    pub power_w_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub method: Method,
    pub total_power_w_days: f64,
    pub n_days: usize,
    pub per_cluster: Vec<ClusterSummary>,
    #[serde(default)]
    pub degenerate_clusters: Vec<usize>,
}

impl LongTermPrediction {
    pub fn summary(&self) -> PredictionSummary {
        PredictionSummary {
            method: self.method,
            total_power_w_days: self.total_power,
            n_days: self.n_days,
            per_cluster: self
                .counts
                .iter()
                .zip(&self.per_cluster_power)
                .enumerate()
                .map(|(cluster, (&count, &power_w_days))| ClusterSummary {
                    cluster,
                    count,
                    power_w_days,
                })
                .collect(),
            degenerate_clusters: self.degenerate_clusters.clone(),
        }
    }

    /// Writes `summary.json`, `mean_wake/`, `wake_sum/` and one
    /// `cluster_NN/` raster directory per cluster under `dir`.
    pub fn write(&self, dir: &Path, timestamp: Timestamp) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("summary.json");
        let mut text =
            serde_json::to_string_pretty(&self.summary()).map_err(|e| Error::json(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let wake = || Channel::new("wake", "m/s");
        ingest::write_raster(&self.mean_wake, wake(), timestamp, &dir.join("mean_wake"))?;
        ingest::write_raster(
            &self.wake_sum,
            Channel::new("wake", "m/s*days"),
            timestamp,
            &dir.join("wake_sum"),
        )?;
        for (i, r) in self.per_cluster_mean_wake.iter().enumerate() {
            ingest::write_raster(r, wake(), timestamp, &dir.join(format!("cluster_{i:02}")))?;
        }
        Ok(())
    }
}
