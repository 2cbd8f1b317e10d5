//! Turbine and farm description: power curve, thrust curve, Fitch drag and
//! the default 100-turbine array.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::LatLon;
use crate::error::{ensure, Error, Result};

/// Farm centre used by [`default_farm`] and the reference scenario.
pub const DEFAULT_FARM_CENTER: LatLon = LatLon { lat: 60.0, lon: 1.0 };

/// One row of a thrust-coefficient table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrustPoint {
    /// Hub-height speed [m/s].
    pub speed: f64,
    pub ct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurbineSpec {
    /// [W]
    pub rated_power: f64,
    /// [m]
    pub rotor_diameter: f64,
    /// [m]
    pub hub_height: f64,
    /// [m/s]
    pub cut_in: f64,
    /// [m/s]
    pub rated_speed: f64,
    /// [m/s]
    pub cut_out: f64,
    /// Speed-ordered thrust table; interpolated linearly, clamped at the ends.
    pub thrust_curve: Vec<ThrustPoint>,
    /// [kg/m^3]
    pub air_density: f64,
}

impl Default for TurbineSpec {
    /// 5 MW reference turbine, 126 m rotor at 100 m hub height.
    fn default() -> Self {
        Self {
            rated_power: 5.0e6,
            rotor_diameter: 126.0,
            hub_height: 100.0,
            cut_in: 3.0,
            rated_speed: 11.4,
            cut_out: 25.0,
            thrust_curve: vec![
                ThrustPoint { speed: 0.0, ct: 0.8 },
                ThrustPoint { speed: 11.4, ct: 0.8 },
                ThrustPoint { speed: 25.0, ct: 0.1 },
            ],
            air_density: 1.225,
        }
    }
}

impl TurbineSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            0.0 < self.cut_in && self.cut_in < self.rated_speed && self.rated_speed < self.cut_out,
            Validation,
            "need 0 < cut_in < rated_speed < cut_out, got {} / {} / {}",
            self.cut_in,
            self.rated_speed,
            self.cut_out
        );
        ensure!(
            self.rated_power > 0.0 && self.rotor_diameter > 0.0 && self.air_density > 0.0,
            Validation,
            "rated power, rotor diameter and air density must be positive"
        );
        ensure!(!self.thrust_curve.is_empty(), Validation, "thrust curve is empty");
        ensure!(
            self.thrust_curve.windows(2).all(|w| w[0].speed < w[1].speed),
            Validation,
            "thrust curve speeds must be strictly increasing"
        );
        // C_T = 0 is allowed so that a farm can be made aerodynamically invisible.
        ensure!(
            self.thrust_curve.iter().all(|p| (0.0..1.0).contains(&p.ct)),
            Validation,
            "thrust coefficients must lie in [0, 1)"
        );
        Ok(())
    }

    /// Swept rotor area [m^2].
    pub fn rotor_area(&self) -> f64 {
        PI * (0.5 * self.rotor_diameter).powi(2)
    }

    pub fn rotor_radius(&self) -> f64 {
        0.5 * self.rotor_diameter
    }

    /// Thrust coefficient at `speed`.
    pub fn thrust_coefficient(&self, speed: f64) -> f64 {
        let table = &self.thrust_curve;
        let first = table[0];
        let last = table[table.len() - 1];
        if speed <= first.speed {
            return first.ct;
        }
        if speed >= last.speed {
            return last.ct;
        }
        let k = table.partition_point(|p| p.speed <= speed);
        let (a, b) = (table[k - 1], table[k]);
        let t = (speed - a.speed) / (b.speed - a.speed);
        a.ct + t * (b.ct - a.ct)
    }

    /// Copy with every thrust coefficient replaced by `ct`.
    pub fn with_constant_thrust(&self, ct: f64) -> TurbineSpec {
        TurbineSpec {
            thrust_curve: self
                .thrust_curve
                .iter()
                .map(|p| ThrustPoint { speed: p.speed, ct })
                .collect(),
            ..self.clone()
        }
    }
}

/// Electrical power [W] at hub-height `speed`.
///
/// Zero below cut-in and from cut-out upward, rated between rated speed and
/// cut-out, and a cubic ramp in between.
pub fn power_curve(spec: &TurbineSpec, speed: f64) -> f64 {
    if !(speed >= spec.cut_in && speed < spec.cut_out) {
        return 0.0;
    }
    if speed >= spec.rated_speed {
        return spec.rated_power;
    }
    let ci3 = spec.cut_in.powi(3);
    spec.rated_power * (speed.powi(3) - ci3) / (spec.rated_speed.powi(3) - ci3)
}

/// Fitch drag on the flow, `-1/2 C_T rho A V |V|` [N], for velocity `v`
/// `(east, north)` in m/s. `C_T` is looked up at `|V|`.
pub fn fitch_drag(spec: &TurbineSpec, v: (f64, f64)) -> (f64, f64) {
    let speed = v.0.hypot(v.1);
    let k = -0.5 * spec.thrust_coefficient(speed) * spec.air_density * spec.rotor_area() * speed;
    (k * v.0, k * v.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarmSpec {
    /// Turbine `(east, north)` offsets from the farm centre [m].
    pub turbines: Vec<(f64, f64)>,
    pub turbine: TurbineSpec,
    pub farm_center: LatLon,
}

impl FarmSpec {
    pub fn new(turbines: Vec<(f64, f64)>, turbine: TurbineSpec, farm_center: LatLon) -> Result<Self> {
        let farm = Self {
            turbines,
            turbine,
            farm_center,
        };
        farm.validate()?;
        Ok(farm)
    }

    pub fn validate(&self) -> Result<()> {
        self.turbine.validate()?;
        ensure!(!self.turbines.is_empty(), Validation, "farm has no turbines");
        let mut seen = HashSet::new();
        for &(x, y) in &self.turbines {
            ensure!(
                x.is_finite() && y.is_finite(),
                Validation,
                "turbine position ({x}, {y}) is not finite"
            );
            ensure!(
                seen.insert((x.to_bits(), y.to_bits())),
                Validation,
                "duplicate turbine position ({x}, {y})"
            );
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.turbines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turbines.is_empty()
    }

    /// Turbine count times turbine rating [W].
    pub fn rated_power(&self) -> f64 {
        self.turbines.len() as f64 * self.turbine.rated_power
    }

    pub fn with_turbine(&self, turbine: TurbineSpec) -> FarmSpec {
        FarmSpec {
            turbine,
            ..self.clone()
        }
    }

    pub fn with_center(&self, farm_center: LatLon) -> FarmSpec {
        FarmSpec {
            farm_center,
            ..self.clone()
        }
    }

    pub fn load(path: &Path) -> Result<FarmSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let farm: FarmSpec = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        farm.validate()?;
        Ok(farm)
    }
}

/// Rectangular `n x n` array at `spacing` meters, centred on the origin.
pub fn square_array(n: usize, spacing: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (n as f64 - 1.0);
    let mut out = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            out.push(((col as f64 - half) * spacing, (row as f64 - half) * spacing));
        }
    }
    out
}

/// 10 x 10 array of default turbines at 7 rotor diameters spacing around
/// [`DEFAULT_FARM_CENTER`].
pub fn default_farm() -> FarmSpec {
    let turbine = TurbineSpec::default();
    let spacing = 7.0 * turbine.rotor_diameter;
    FarmSpec::new(square_array(10, spacing), turbine, DEFAULT_FARM_CENTER)
        .expect("default farm is valid")
}
