//! Steady-state wake surrogate and the solver seam.
//!
//! [`JensenSolver`] evaluates a top-hat Jensen wake for every turbine, with
//! root-sum-square superposition, against the local hub-height inflow. Any
//! other flow model (for instance mesoscale runs computed elsewhere) plugs in
//! through [`FlowSolver`]; [`ExternalSolver`] reads such results from disk.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::datamodel::{
    wind_speed_direction, Channel, GridSpec, GriddedField, LatLon, Raster, Timestamp,
    WeatherDataset,
};
use crate::error::{ensure, Error, Result};
use crate::farm::{fitch_drag, power_curve, FarmSpec};
use crate::ingest;

pub const U_CHANNEL: &str = "u100";
pub const V_CHANNEL: &str = "v100";
pub const DEFICIT_CHANNEL: &str = "deficit";
pub const POWER_SIDECAR: &str = "power.json";

/// Offshore wake decay constant.
pub const DEFAULT_WAKE_DECAY: f64 = 0.05;

/// Farm-absent hub-height wind over the simulation domain.
#[derive(Debug, Clone, PartialEq)]
pub struct InflowCondition {
    field: GriddedField,
}

impl InflowCondition {
    pub fn new(field: GriddedField) -> Result<Self> {
        field.channel_index(U_CHANNEL)?;
        field.channel_index(V_CHANNEL)?;
        Ok(Self { field })
    }

    pub fn from_dataset(ds: &WeatherDataset, t: usize) -> Result<Self> {
        let grid = *ds.grid();
        let mut values = ds.channel_slice(t, U_CHANNEL)?.to_vec();
        values.extend_from_slice(ds.channel_slice(t, V_CHANNEL)?);
        let field = GriddedField::new(
            grid,
            ds.times()[t],
            vec![Channel::new(U_CHANNEL, "m/s"), Channel::new(V_CHANNEL, "m/s")],
            values,
        )?;
        Ok(Self { field })
    }

    /// Spatially uniform flow of `speed` toward angle `theta`.
    pub fn uniform(grid: GridSpec, timestamp: Timestamp, speed: f64, theta: f64) -> Result<Self> {
        let n = grid.cells();
        let mut values = vec![speed * theta.cos(); n];
        values.extend(std::iter::repeat_n(speed * theta.sin(), n));
        Self::new(GriddedField::new(
            grid,
            timestamp,
            vec![Channel::new(U_CHANNEL, "m/s"), Channel::new(V_CHANNEL, "m/s")],
            values,
        )?)
    }

    pub fn grid(&self) -> &GridSpec {
        self.field.grid()
    }

    pub fn timestamp(&self) -> Timestamp {
        self.field.timestamp()
    }

    pub fn u(&self) -> &[f64] {
        self.field.channel(U_CHANNEL).expect("checked at construction")
    }

    pub fn v(&self) -> &[f64] {
        self.field.channel(V_CHANNEL).expect("checked at construction")
    }

    pub fn field(&self) -> &GriddedField {
        &self.field
    }

    /// Bilinear `(u, v)` at a point, `None` outside the grid.
    pub fn sample(&self, p: LatLon) -> Option<(f64, f64)> {
        let (fi, fj) = self.grid().fractional_index(p);
        Some((
            self.grid().bilinear(self.u(), fi, fj)?,
            self.grid().bilinear(self.v(), fi, fj)?,
        ))
    }

    /// `(u, v)` at the grid node nearest `p`.
    pub fn nearest(&self, p: LatLon) -> Option<(f64, f64)> {
        let (i, j) = self.grid().nearest_cell(p)?;
        let k = i * self.grid().n_lon() + j;
        Some((self.u()[k], self.v()[k]))
    }
}

/// Hub-height deficit raster and farm power for one inflow.
#[derive(Debug, Clone, PartialEq)]
pub struct WakeResult {
    /// Free-stream minus waked speed [m/s], non-negative.
    pub deficit: Raster,
    /// [W]
    pub farm_power: f64,
    /// [W]; empty when the producer did not report per-turbine values.
    pub per_turbine_power: Vec<f64>,
    /// Waked hub-height speed per turbine [m/s]; may be empty.
    pub per_turbine_speed: Vec<f64>,
    /// Magnitude of the Fitch momentum sink per turbine [N]; may be empty.
    pub per_turbine_drag: Vec<f64>,
    pub timestamp: Timestamp,
}

impl WakeResult {
    pub fn validate(&self, rated_farm_power: Option<f64>) -> Result<()> {
        ensure!(
            self.deficit.values().iter().all(|&d| d >= 0.0),
            Validation,
            "wake deficit has negative cells"
        );
        ensure!(
            self.farm_power.is_finite() && self.farm_power >= 0.0,
            Validation,
            "farm power {} must be finite and non-negative",
            self.farm_power
        );
        if let Some(rated) = rated_farm_power {
            ensure!(
                self.farm_power <= rated * (1.0 + 1e-12),
                Validation,
                "farm power {} exceeds rating {rated}",
                self.farm_power
            );
        }
        if !self.per_turbine_power.is_empty() {
            let sum: f64 = self.per_turbine_power.iter().sum();
            ensure!(
                (sum - self.farm_power).abs() <= 1e-9 * self.farm_power.max(1.0),
                Validation,
                "per-turbine powers sum to {sum}, farm power is {}",
                self.farm_power
            );
        }
        Ok(())
    }
}

/// Anything that maps an inflow and a farm to a wake result.
pub trait FlowSolver: Sync {
    fn simulate(&self, inflow: &InflowCondition, farm: &FarmSpec) -> Result<WakeResult>;
}

impl<S: FlowSolver + ?Sized> FlowSolver for &S {
    fn simulate(&self, inflow: &InflowCondition, farm: &FarmSpec) -> Result<WakeResult> {
        (**self).simulate(inflow, farm)
    }
}

/// Wraps a solver and counts the calls made to it.
#[derive(Debug, Default)]
pub struct CountingSolver<S> {
    inner: S,
    calls: AtomicUsize,
}

impl<S> CountingSolver<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(AtomicOrdering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, AtomicOrdering::SeqCst);
    }
}

impl<S: FlowSolver> FlowSolver for CountingSolver<S> {
    fn simulate(&self, inflow: &InflowCondition, farm: &FarmSpec) -> Result<WakeResult> {
        self.calls.fetch_add(1, AtomicOrdering::SeqCst);
        self.inner.simulate(inflow, farm)
    }
}

/// Top-hat Jensen wake model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JensenSolver {
    pub k_wake: f64,
}

impl Default for JensenSolver {
    fn default() -> Self {
        Self {
            k_wake: DEFAULT_WAKE_DECAY,
        }
    }
}

impl FlowSolver for JensenSolver {
    fn simulate(&self, inflow: &InflowCondition, farm: &FarmSpec) -> Result<WakeResult> {
        jensen_simulate(inflow, farm, self.k_wake)
    }
}

/// Fractional speed deficit of a single wake at downstream distance `x` and
/// radial offset `r` [m]: `(1 - sqrt(1 - C_T)) / (1 + k x / r0)^2` inside the
/// cone of radius `r0 + k x`, zero elsewhere.
pub fn jensen_deficit_fraction(ct: f64, k_wake: f64, r0: f64, x: f64, r: f64) -> f64 {
    if x <= 0.0 || r > r0 + k_wake * x {
        return 0.0;
    }
    let expansion = 1.0 + k_wake * x / r0;
    (1.0 - (1.0 - ct).sqrt()) / (expansion * expansion)
}

/// Downstream and cross-stream offsets of `p` from `origin` for flow angle `theta`.
fn along_across(origin: (f64, f64), p: (f64, f64), theta: f64) -> (f64, f64) {
    let (dx, dy) = (p.0 - origin.0, p.1 - origin.1);
    let (c, s) = (theta.cos(), theta.sin());
    (dx * c + dy * s, (-dx * s + dy * c).abs())
}

struct TurbineState {
    pos: (f64, f64),
    theta: f64,
    ct: f64,
}

/// Runs the Jensen surrogate for one inflow.
///
/// Turbines are processed from upstream to downstream along the flow at the
/// farm centre. Each turbine sees its local free-stream speed reduced by the
/// root-sum-square of the wakes from turbines already processed, each wake
/// travelling along its source turbine's local flow direction. The raster is
/// evaluated per grid cell with all turbine wakes aligned to the cell's own
/// flow direction.
pub fn jensen_simulate(inflow: &InflowCondition, farm: &FarmSpec, k_wake: f64) -> Result<WakeResult> {
    ensure!(
        k_wake > 0.0 && k_wake.is_finite(),
        Validation,
        "wake decay constant must be positive, got {k_wake}"
    );
    farm.validate()?;
    let grid = *inflow.grid();
    let frame = grid.local_frame(farm.farm_center);
    let turbine = &farm.turbine;
    let r0 = turbine.rotor_radius();

    let mut local = Vec::with_capacity(farm.len());
    for (t, &(x, y)) in farm.turbines.iter().enumerate() {
        let p = frame.to_geo(x, y);
        let (fi, fj) = grid.fractional_index(p);
        let interior = fi > 0.0
            && fj > 0.0
            && fi < (grid.n_lat() - 1) as f64
            && fj < (grid.n_lon() - 1) as f64;
        ensure!(
            interior,
            Validation,
            "turbine {t} at ({:.4}, {:.4}) lies outside the domain interior",
            p.lat,
            p.lon
        );
        local.push(inflow.sample(p).expect("interior point"));
    }

    let center_theta = inflow
        .sample(farm.farm_center)
        .map(|(u, v)| wind_speed_direction(u, v).1)
        .unwrap_or(0.0);
    let mut order: Vec<usize> = (0..farm.len()).collect();
    let upstream = |t: usize| {
        let (x, y) = farm.turbines[t];
        x * center_theta.cos() + y * center_theta.sin()
    };
    order.sort_by(|&a, &b| upstream(a).partial_cmp(&upstream(b)).unwrap_or(Ordering::Equal));

    let mut power = vec![0.0; farm.len()];
    let mut speed = vec![0.0; farm.len()];
    let mut drag = vec![0.0; farm.len()];
    let mut done: Vec<TurbineState> = Vec::with_capacity(farm.len());
    for &t in &order {
        let pos = farm.turbines[t];
        let (u, v) = local[t];
        let (free, theta) = wind_speed_direction(u, v);
        let sumsq: f64 = done
            .iter()
            .map(|up| {
                let (x, r) = along_across(up.pos, pos, up.theta);
                jensen_deficit_fraction(up.ct, k_wake, r0, x, r).powi(2)
            })
            .sum();
        let eff = free * (1.0 - sumsq.sqrt()).max(0.0);
        speed[t] = eff;
        power[t] = power_curve(turbine, eff);
        let f = fitch_drag(turbine, (eff * theta.cos(), eff * theta.sin()));
        drag[t] = f.0.hypot(f.1);
        done.push(TurbineState {
            pos,
            theta,
            ct: turbine.thrust_coefficient(eff),
        });
    }

    let (u_all, v_all) = (inflow.u(), inflow.v());
    let n_lon = grid.n_lon();
    let deficit: Vec<f64> = (0..grid.cells())
        .into_par_iter()
        .map(|c| {
            let (s, theta) = wind_speed_direction(u_all[c], v_all[c]);
            if s == 0.0 {
                return 0.0;
            }
            let cell = frame.to_local(LatLon::new(grid.lat(c / n_lon), grid.lon(c % n_lon)));
            let sumsq: f64 = done
                .iter()
                .map(|up| {
                    let (x, r) = along_across(up.pos, cell, theta);
                    jensen_deficit_fraction(up.ct, k_wake, r0, x, r).powi(2)
                })
                .sum();
            s * sumsq.sqrt().min(1.0)
        })
        .collect();

    Ok(WakeResult {
        deficit: Raster::new(grid, deficit)?,
        farm_power: power.iter().sum(),
        per_turbine_power: power,
        per_turbine_speed: speed,
        per_turbine_drag: drag,
        timestamp: inflow.timestamp(),
    })
}

/// Simulates day `t` of `ds` (which must carry `u100`/`v100`).
pub fn simulate_day(
    ds: &WeatherDataset,
    t: usize,
    farm: &FarmSpec,
    solver: &dyn FlowSolver,
) -> Result<WakeResult> {
    ensure!(t < ds.len(), Range, "day index {t} out of range ({} days)", ds.len());
    let inflow = InflowCondition::from_dataset(ds, t)?;
    solver.simulate(&inflow, farm)
}

/// One solver run per cluster, at each cluster's representative datapoint.
pub fn simulate_clusters(
    model: &ClusterModel,
    ds: &WeatherDataset,
    farm: &FarmSpec,
    solver: &dyn FlowSolver,
) -> Result<Vec<WakeResult>> {
    model
        .representative_idx
        .par_iter()
        .map(|&t| simulate_day(ds, t, farm, solver))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PowerSidecar {
    farm_power_w: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    per_turbine_power_w: Vec<f64>,
}

/// Writes a result as a `deficit` raster plus `power.json`.
pub fn export_wake_result(result: &WakeResult, dir: &Path) -> Result<()> {
    ingest::write_raster(
        &result.deficit,
        Channel::new(DEFICIT_CHANNEL, "m/s"),
        result.timestamp,
        dir,
    )?;
    let side = PowerSidecar {
        farm_power_w: result.farm_power,
        per_turbine_power_w: result.per_turbine_power.clone(),
    };
    let path = dir.join(POWER_SIDECAR);
    let mut text = serde_json::to_string_pretty(&side).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Wraps an externally computed deficit raster and farm power as a result
/// for `inflow`.
pub fn import_external_result(
    deficit_path: &Path,
    power: f64,
    inflow: &InflowCondition,
) -> Result<WakeResult> {
    let (deficit, _) = ingest::read_raster(deficit_path, DEFICIT_CHANNEL)?;
    ensure!(
        deficit.grid() == inflow.grid(),
        Validation,
        "deficit grid {:?} does not match inflow grid {:?}",
        deficit.grid(),
        inflow.grid()
    );
    let result = WakeResult {
        deficit,
        farm_power: power,
        per_turbine_power: Vec::new(),
        per_turbine_speed: Vec::new(),
        per_turbine_drag: Vec::new(),
        timestamp: inflow.timestamp(),
    };
    result.validate(None)?;
    Ok(result)
}

/// Reads a directory written by [`export_wake_result`] (or by an external
/// tool following the same layout).
pub fn import_result_dir(dir: &Path, inflow: &InflowCondition) -> Result<WakeResult> {
    let path = dir.join(POWER_SIDECAR);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let side: PowerSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let mut result = import_external_result(dir, side.farm_power_w, inflow)?;
    result.per_turbine_power = side.per_turbine_power_w;
    result.validate(None)?;
    Ok(result)
}

/// Directory name used for a result keyed by inflow time.
pub fn result_key(ts: Timestamp) -> String {
    ts.format("%Y%m%dT%H%M%SZ").to_string()
}

/// Serves precomputed results stored under `root/<result_key>/`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalSolver {
    pub root: PathBuf,
}

impl ExternalSolver {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl FlowSolver for ExternalSolver {
    fn simulate(&self, inflow: &InflowCondition, farm: &FarmSpec) -> Result<WakeResult> {
        let dir = self.root.join(result_key(inflow.timestamp()));
        ensure!(
            dir.is_dir(),
            Lookup,
            "no external result for {} (expected {})",
            inflow.timestamp(),
            dir.display()
        );
        let result = import_result_dir(&dir, inflow)?;
        result.validate(Some(farm.rated_power()))?;
        Ok(result)
    }
}
