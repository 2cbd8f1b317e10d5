//! Run configuration: a JSON file plus command-line overrides.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;
use windregime::datamodel::{DomainWindow, Timestamp, WeatherDataset};
use windregime::{ingest, FarmSpec};

use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Jensen,
    External,
}

/// Inclusive range of dataset timestamps.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Period {
    pub start: Timestamp,
    pub end: Timestamp,
}

fn default_channels() -> Vec<String> {
    vec!["u100".into(), "v100".into()]
}

fn default_k() -> usize {
    6
}

fn default_k_range() -> [usize; 2] {
    [2, 12]
}

fn default_draws() -> usize {
    365
}

fn default_sample_size() -> usize {
    6
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory or manifest path.
    pub dataset: PathBuf,
    #[serde(default = "default_channels")]
    pub channels: Vec<String>,
    /// `[lat_min, lat_max, lon_min, lon_max]` in degrees.
    #[serde(default)]
    pub window: Option<[f64; 4]>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Inclusive `k` range scanned by `elbow`.
    #[serde(default = "default_k_range")]
    pub k_range: [usize; 2],
    #[serde(default)]
    pub seed: u64,
    /// Farm description; the built-in 10x10 array when absent.
    #[serde(default)]
    pub farm: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverChoice,
    /// Root of precomputed results for the external solver.
    #[serde(default)]
    pub external_dir: Option<PathBuf>,
    /// Days scored by `aggregate` and `validate`; the whole dataset when absent.
    #[serde(default)]
    pub validation_period: Option<Period>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_draws")]
    pub random_draws: usize,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    /// Run the farm-feedback re-clustering during `validate`.
    #[serde(default = "default_true")]
    pub feedback: bool,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub solver: Option<SolverChoice>,
    pub k: Option<usize>,
    pub window: Option<[f64; 4]>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads the file and applies overrides. Relative paths in the file are
    /// taken relative to the file's directory.
    pub fn load(path: &Path, ov: &Overrides) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::Config(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset = resolve(base, &cfg.dataset);
        cfg.farm = cfg.farm.map(|p| resolve(base, &p));
        cfg.external_dir = cfg.external_dir.map(|p| resolve(base, &p));
        cfg.out_dir = cfg.out_dir.map(|p| resolve(base, &p));
        if let Some(o) = &ov.out {
            cfg.out_dir = Some(o.clone());
        }
        if let Some(s) = ov.seed {
            cfg.seed = s;
        }
        if let Some(s) = ov.solver {
            cfg.solver = s;
        }
        if let Some(k) = ov.k {
            cfg.k = k;
        }
        if ov.window.is_some() {
            cfg.window = ov.window;
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), Failure> {
        let bad = |m: String| Err(Failure::Config(m));
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if self.k_range[0] < 1 || self.k_range[0] > self.k_range[1] {
            return bad(format!("k_range {:?} must be increasing and start at 1 or more", self.k_range));
        }
        if self.channels.is_empty() {
            return bad("at least one channel is required".into());
        }
        if !self.dataset.exists() {
            return bad(format!("dataset {} does not exist", self.dataset.display()));
        }
        if let Some(f) = &self.farm {
            if !f.exists() {
                return bad(format!("farm file {} does not exist", f.display()));
            }
        }
        if self.solver == SolverChoice::External {
            match &self.external_dir {
                Some(d) if d.is_dir() => {}
                Some(d) => return bad(format!("external result directory {} does not exist", d.display())),
                None => return bad("solver \"external\" needs external_dir".into()),
            }
        }
        if self.out_dir.is_none() {
            return bad("no output directory: set out_dir or pass --out".into());
        }
        Ok(())
    }

    pub fn out_dir(&self) -> &Path {
        self.out_dir.as_deref().expect("checked at load")
    }

    pub fn channel_refs(&self) -> Vec<&str> {
        self.channels.iter().map(String::as_str).collect()
    }

    pub fn k_values(&self) -> Vec<usize> {
        (self.k_range[0]..=self.k_range[1]).collect()
    }

    /// The dataset restricted to the configured window.
    pub fn load_dataset(&self) -> Result<WeatherDataset, Failure> {
        let ds = ingest::read_dataset(&self.dataset)?;
        match self.window {
            None => Ok(ds),
            Some([a, b, c, d]) => {
                let w = DomainWindow::from_bounds(ds.grid(), a, b, c, d)?;
                Ok(ds.extract_window(&w)?)
            }
        }
    }

    pub fn load_farm(&self) -> Result<FarmSpec, Failure> {
        match &self.farm {
            Some(p) => Ok(FarmSpec::load(p)?),
            None => Ok(windregime::default_farm()),
        }
    }

    /// Day-index range of the validation period inside `ds`.
    pub fn period(&self, ds: &WeatherDataset) -> Result<Range<usize>, Failure> {
        let Some(p) = &self.validation_period else {
            return Ok(0..ds.len());
        };
        let find = |t: Timestamp| {
            ds.time_index(t).ok_or_else(|| {
                Failure::Config(format!(
                    "validation period bound {} is not a dataset timestamp",
                    ingest::format_time(t)
                ))
            })
        };
        let (a, b) = (find(p.start)?, find(p.end)?);
        if a > b {
            return Err(Failure::Config("validation period ends before it starts".into()));
        }
        Ok(a..b + 1)
    }
}

/// Parses `lat_min,lat_max,lon_min,lon_max`.
pub fn parse_window(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 4] = parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 4 comma-separated values, got {}", v.len()))?;
    if !(arr[0] <= arr[1] && arr[2] <= arr[3]) {
        return Err("window bounds must be ordered lat_min,lat_max,lon_min,lon_max".into());
    }
    Ok(arr)
}
