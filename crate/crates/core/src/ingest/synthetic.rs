//! Seeded synthetic weather with known regimes.
//!
//! Each regime is a uniform hub-height flow plus a smooth sinusoidal
//! perturbation. The day-to-day regime sequence is a Markov chain: with
//! probability `p_stay` the previous regime persists, otherwise a regime is
//! drawn from the occurrence probabilities. Mean-sea-level pressure is the
//! geostrophically balanced field for the day's uniform flow plus noise.
//!
//! Randomness comes from ChaCha8 seeded with `seed`, and Gaussian draws use
//! `rand_distr::StandardNormal`. Draw order per day is: regime choice, speed
//! jitter, direction jitter, then per-cell noise for u, v and msl.

use std::f64::consts::PI;

use chrono::TimeZone;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Channel, GridSpec, LatLon, Timestamp, WeatherDataset};
use crate::error::{ensure, Error, Result};

const EARTH_ROTATION: f64 = 7.292_115e-5;
const REFERENCE_PRESSURE: f64 = 101_325.0;
const SURFACE_AIR_DENSITY: f64 = 1.225;

/// One regime's mean flow and occurrence probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpec {
    /// Uniform flow speed [m/s].
    pub speed: f64,
    /// Flow angle [rad], counter-clockwise from east, direction blown toward.
    pub direction: f64,
    /// Amplitude of the smooth spatial perturbation [m/s].
    pub perturbation: f64,
    pub probability: f64,
    /// Std of a per-day offset to the uniform speed [m/s].
    #[serde(default)]
    pub speed_jitter: f64,
    /// Std of a per-day offset to the uniform direction [rad].
    #[serde(default)]
    pub direction_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticRegimeSpec {
    pub regimes: Vec<RegimeSpec>,
    /// Std of i.i.d. per-cell wind noise [m/s].
    pub noise_std: f64,
    /// Std of i.i.d. per-cell pressure noise [Pa].
    #[serde(default)]
    pub pressure_noise_std: f64,
    pub p_stay: f64,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: Timestamp,
}

fn default_start() -> Timestamp {
    chrono::Utc.with_ymd_and_hms(2006, 1, 1, 12, 0, 0).unwrap()
}

impl SyntheticRegimeSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.regimes.is_empty(), Validation, "need at least one regime");
        let total: f64 = self.regimes.iter().map(|r| r.probability).sum();
        ensure!(
            (total - 1.0).abs() <= 1e-12,
            Validation,
            "regime probabilities sum to {total}, expected 1"
        );
        for (k, r) in self.regimes.iter().enumerate() {
            ensure!(
                r.probability >= 0.0
                    && r.speed >= 0.0
                    && r.speed_jitter >= 0.0
                    && r.direction_jitter >= 0.0
                    && [r.speed, r.direction, r.perturbation].iter().all(|v| v.is_finite()),
                Validation,
                "regime {k} has invalid parameters: {r:?}"
            );
        }
        ensure!(
            self.noise_std >= 0.0 && self.pressure_noise_std >= 0.0,
            Validation,
            "noise std must be non-negative"
        );
        ensure!(
            (0.0..=1.0).contains(&self.p_stay),
            Validation,
            "p_stay {} outside [0, 1]",
            self.p_stay
        );
        Ok(())
    }
}

/// Everything needed to produce a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub spec: SyntheticRegimeSpec,
    pub grid: GridSpec,
    pub n_days: usize,
}

impl SynthConfig {
    pub fn generate(&self) -> Result<(WeatherDataset, Vec<usize>)> {
        generate_synthetic(&self.spec, self.n_days, self.grid)
    }
}

fn draw_regime(rng: &mut ChaCha8Rng, regimes: &[RegimeSpec]) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (k, r) in regimes.iter().enumerate() {
        acc += r.probability;
        if x < acc {
            return k;
        }
    }
    // Rounding left x above the cumulative sum; take the last regime with mass.
    regimes
        .iter()
        .rposition(|r| r.probability > 0.0)
        .unwrap_or(regimes.len() - 1)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Generates `n_days` daily fields (channels `u100`, `v100`, `msl`) and the
/// ground-truth regime label of each day. Values are rounded to `f32`
/// precision so they survive the on-disk format unchanged.
pub fn generate_synthetic(
    spec: &SyntheticRegimeSpec,
    n_days: usize,
    grid: GridSpec,
) -> Result<(WeatherDataset, Vec<usize>)> {
    spec.validate()?;
    ensure!(n_days >= 1, Validation, "n_days must be at least 1");
    let k_true = spec.regimes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n = grid.cells();
    let frame = grid.local_frame(grid.center());
    let coriolis = 2.0 * EARTH_ROTATION * grid.center().lat.to_radians().sin();
    let rho_f = SURFACE_AIR_DENSITY * coriolis;
    let norm = |idx: usize, count: usize| {
        if count > 1 {
            idx as f64 / (count - 1) as f64
        } else {
            0.5
        }
    };
    // Per-cell (east, north) offsets and normalised coordinates.
    let mut xy = Vec::with_capacity(n);
    let mut ab = Vec::with_capacity(n);
    for i in 0..grid.n_lat() {
        for j in 0..grid.n_lon() {
            xy.push(frame.to_local(LatLon::new(grid.lat(i), grid.lon(j))));
            ab.push((norm(i, grid.n_lat()), norm(j, grid.n_lon())));
        }
    }

    let mut labels = Vec::with_capacity(n_days);
    let mut data = Vec::with_capacity(n_days * 3 * n);
    let mut times = Vec::with_capacity(n_days);
    for day in 0..n_days {
        let regime = match labels.last() {
            Some(&prev) if rng.random::<f64>() < spec.p_stay => prev,
            _ => draw_regime(&mut rng, &spec.regimes),
        };
        labels.push(regime);
        let r = &spec.regimes[regime];
        let speed = (r.speed + r.speed_jitter * normal(&mut rng)).max(0.0);
        let direction = r.direction + r.direction_jitter * normal(&mut rng);
        let (u0, v0) = (speed * direction.cos(), speed * direction.sin());
        let phase = 2.0 * PI * regime as f64 / k_true as f64;

        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        for c in 0..n {
            let (a, b) = ab[c];
            let du = r.perturbation * (PI * a + phase).sin() * (PI * b).cos();
            let dv = r.perturbation * (PI * a).cos() * (PI * b + phase).sin();
            u.push(u0 + du + spec.noise_std * normal(&mut rng));
            v.push(v0 + dv + spec.noise_std * normal(&mut rng));
            let (x, y) = xy[c];
            p.push(
                REFERENCE_PRESSURE
                    + rho_f * (v0 * x - u0 * y)
                    + spec.pressure_noise_std * normal(&mut rng),
            );
        }
        for block in [u, v, p] {
            data.extend(block.into_iter().map(|x| x as f32 as f64));
        }
        times.push(spec.start + chrono::Duration::days(day as i64));
    }

    let channels = vec![
        Channel::new("u100", "m/s"),
        Channel::new("v100", "m/s"),
        Channel::new("msl", "Pa"),
    ];
    let ds = WeatherDataset::new(grid, channels, times, data)
        .map_err(|e| Error::Validation(format!("synthetic generation failed: {e}")))?;
    Ok((ds, labels))
}

/// The reference scenario: six well-separated regimes on a 40x40 grid of
/// roughly 2.2 km cells around 60N 1E, two years of daily fields starting
/// 2006-01-01. The second year (2007) serves as the validation year.
pub fn reference_scenario() -> SynthConfig {
    let regime = |speed: f64, deg: f64, probability: f64| RegimeSpec {
        speed,
        direction: deg.to_radians(),
        perturbation: 1.5,
        probability,
        speed_jitter: 1.2,
        direction_jitter: 0.2,
    };
    let center = crate::farm::DEFAULT_FARM_CENTER;
    let (d_lat, d_lon) = (0.02, 0.04);
    let grid = GridSpec::from_spacing(
        center.lat - 19.5 * d_lat,
        center.lon - 19.5 * d_lon,
        d_lat,
        d_lon,
        40,
        40,
    )
    .expect("reference grid is valid");
    SynthConfig {
        spec: SyntheticRegimeSpec {
            regimes: vec![
                regime(9.0, 15.0, 0.22),
                regime(12.5, 75.0, 0.14),
                regime(7.0, 140.0, 0.16),
                regime(10.5, 200.0, 0.18),
                regime(6.0, 265.0, 0.12),
                regime(8.0, 320.0, 0.18),
            ],
            noise_std: 0.4,
            pressure_noise_std: 80.0,
            p_stay: 0.6,
            seed: 20_070_101,
            start: default_start(),
        },
        grid,
        n_days: 730,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::from_spacing(59.8, 0.6, 0.05, 0.1, 6, 5).unwrap()
    }

    fn spec(k: usize, noise: f64, pert: f64, p_stay: f64) -> SyntheticRegimeSpec {
        SyntheticRegimeSpec {
            regimes: (0..k)
                .map(|i| RegimeSpec {
                    speed: 5.0 + i as f64,
                    direction: i as f64,
                    perturbation: pert,
                    probability: 1.0 / k as f64,
                    speed_jitter: 0.0,
                    direction_jitter: 0.0,
                })
                .collect(),
            noise_std: noise,
            pressure_noise_std: 0.0,
            p_stay,
            seed: 7,
            start: default_start(),
        }
    }

    #[test]
    fn noiseless_days_equal_regime_mean() {
        let s = spec(3, 0.0, 0.0, 0.0);
        let (ds, labels) = generate_synthetic(&s, 40, grid()).unwrap();
        for (t, &k) in labels.iter().enumerate() {
            let r = &s.regimes[k];
            let u = r.speed * r.direction.cos();
            let v = r.speed * r.direction.sin();
            assert!(ds.channel_slice(t, "u100").unwrap().iter().all(|&x| x == u as f32 as f64));
            assert!(ds.channel_slice(t, "v100").unwrap().iter().all(|&x| x == v as f32 as f64));
        }
        // Days in one regime are identical, all channels.
        let first = labels[0];
        let same: Vec<_> = (0..40).filter(|&t| labels[t] == first).collect();
        for &t in &same {
            assert_eq!(ds.field(t).unwrap().values(), ds.field(same[0]).unwrap().values());
        }
    }

    #[test]
    fn absorbing_chain() {
        let (_, labels) = generate_synthetic(&spec(4, 1.0, 1.0, 1.0), 200, grid()).unwrap();
        assert!(labels.iter().all(|&l| l == labels[0]));
    }

    #[test]
    fn persistence_matches_stationary_calculation() {
        let mut s = spec(6, 0.0, 0.0, 0.8);
        let probs = [0.3, 0.2, 0.15, 0.15, 0.1, 0.1];
        for (r, p) in s.regimes.iter_mut().zip(probs) {
            r.probability = p;
        }
        let g = GridSpec::from_spacing(60.0, 1.0, 0.1, 0.1, 1, 1).unwrap();
        let (_, labels) = generate_synthetic(&s, 10_000, g).unwrap();
        let mut from = [0usize; 6];
        let mut stay = [0usize; 6];
        for w in labels.windows(2) {
            from[w[0]] += 1;
            if w[0] == w[1] {
                stay[w[0]] += 1;
            }
        }
        for k in 0..6 {
            let expected = 0.8 + 0.2 * probs[k];
            let got = stay[k] as f64 / from[k] as f64;
            // Four binomial standard errors.
            let tol = 4.0 * (expected * (1.0 - expected) / from[k] as f64).sqrt();
            assert!((got - expected).abs() <= tol, "regime {k}: {got} vs {expected} (tol {tol})");
        }
    }

    #[test]
    fn seeded_determinism() {
        let s = spec(3, 0.5, 1.0, 0.5);
        let a = generate_synthetic(&s, 120, grid()).unwrap();
        let b = generate_synthetic(&s, 120, grid()).unwrap();
        assert_eq!(a, b);
        let mut s2 = s.clone();
        s2.seed = 8;
        let c = generate_synthetic(&s2, 120, grid()).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec(2, 0.1, 0.0, 0.5);
        s.regimes[0].probability = 0.7;
        assert!(generate_synthetic(&s, 5, grid()).is_err());
        let mut s = spec(2, 0.1, 0.0, 0.5);
        s.p_stay = 1.5;
        assert!(generate_synthetic(&s, 5, grid()).is_err());
        let mut s = spec(2, 0.1, 0.0, 0.5);
        s.noise_std = -1.0;
        assert!(generate_synthetic(&s, 5, grid()).is_err());
        let s = spec(2, 0.1, 0.0, 0.5);
        assert!(generate_synthetic(&s, 0, grid()).is_err());
        let mut s = spec(2, 0.1, 0.0, 0.5);
        s.regimes.clear();
        assert!(matches!(generate_synthetic(&s, 5, grid()), Err(Error::Validation(_))));
    }

    #[test]
    fn pressure_is_geostrophic() {
        let s = spec(1, 0.0, 0.0, 0.0);
        let (ds, _) = generate_synthetic(&s, 1, grid()).unwrap();
        let p = ds.channel_slice(0, "msl").unwrap();
        let g = ds.grid();
        let (m_lat, m_lon) = g.meters_per_degree();
        let f = 2.0 * EARTH_ROTATION * g.center().lat.to_radians().sin();
        let dpdx = (p[1] - p[0]) / (g.d_lon() * m_lon);
        let dpdy = (p[g.n_lon()] - p[0]) / (g.d_lat() * m_lat);
        let (u, v) = (5.0f64 * 0f64.cos(), 5.0f64 * 0f64.sin());
        let v_g = dpdx / (SURFACE_AIR_DENSITY * f);
        let u_g = -dpdy / (SURFACE_AIR_DENSITY * f);
        // Pressure is stored at f32 precision around 1e5 Pa.
        assert!((u_g - u).abs() < 0.2 && (v_g - v).abs() < 0.2, "{u_g} {v_g}");
    }

    #[test]
    fn spec_json_round_trip() {
        let cfg = reference_scenario();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SynthConfig>(&text).unwrap(), cfg);
    }
}
