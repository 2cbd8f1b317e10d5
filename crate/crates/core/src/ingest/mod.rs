//! On-disk dataset format and the synthetic weather generator.
//!
//! A dataset directory holds `manifest.json` and `data.bin`. The binary file
//! is a headerless stream of little-endian `f32` values in
//! `time, channel, lat, lon` order. In memory values are `f64`; writing
//! rounds them to `f32`, so anything that was read from disk writes back
//! byte-for-byte.

mod synthetic;

pub use synthetic::{
    generate_synthetic, reference_scenario, RegimeSpec, SynthConfig, SyntheticRegimeSpec,
};

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::datamodel::{Channel, GridSpec, Raster, Timestamp, WeatherDataset};
use crate::error::{ensure, Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.bin";
pub const DTYPE: &str = "f32le";
pub const LAYOUT: &str = "time,channel,lat,lon";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub grid: GridSpec,
    pub channels: Vec<Channel>,
    pub times: Vec<String>,
    pub data_file: String,
    pub dtype: String,
    pub layout: String,
}

impl DatasetManifest {
    /// Number of `f32` values the data file must hold.
    pub fn element_count(&self) -> usize {
        self.times.len() * self.channels.len() * self.grid.cells()
    }
}

pub fn format_time(ts: Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_time(s: &str) -> Result<Timestamp> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::Validation(format!("bad timestamp {s:?}: {e}")))
}

/// Accepts either a manifest file or the directory containing one.
fn manifest_location(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let path = manifest_location(path);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    // Check the version before the strict parse so that future layouts
    // report a version error rather than an unknown-field error.
    let found = raw
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Validation(format!("{}: missing format_version", path.display())))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(Error::Version {
            found: found.try_into().unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let manifest: DatasetManifest =
        serde_json::from_value(raw).map_err(|e| Error::json(&path, e))?;
    ensure!(
        manifest.dtype == DTYPE,
        Validation,
        "unsupported dtype {:?}",
        manifest.dtype
    );
    ensure!(
        manifest.layout == LAYOUT,
        Validation,
        "unsupported layout {:?}",
        manifest.layout
    );
    Ok(manifest)
}

/// Reads a dataset given its manifest path (or directory).
pub fn read_dataset(manifest_path: &Path) -> Result<WeatherDataset> {
    let mpath = manifest_location(manifest_path);
    let manifest = read_manifest(&mpath)?;
    let dir = mpath.parent().unwrap_or_else(|| Path::new("."));
    let data_path = dir.join(&manifest.data_file);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let expected = manifest.element_count();
    if bytes.len() != expected * 4 {
        return Err(Error::Corrupt(format!(
            "{} holds {} bytes, manifest declares {expected} f32 values ({} bytes)",
            data_path.display(),
            bytes.len(),
            expected * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    let times = manifest
        .times
        .iter()
        .map(|s| parse_time(s))
        .collect::<Result<Vec<_>>>()?;
    WeatherDataset::new(manifest.grid, manifest.channels, times, data)
}

fn encode_f32(values: &[f64]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for &v in values {
        let x = v as f32;
        ensure!(
            x.is_finite(),
            Validation,
            "value {v} is not representable as a finite f32"
        );
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

fn write_parts(
    dir: &Path,
    grid: GridSpec,
    channels: Vec<Channel>,
    times: &[Timestamp],
    data: &[f64],
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        grid,
        channels,
        times: times.iter().map(|&t| format_time(t)).collect(),
        data_file: DATA_FILE.to_string(),
        dtype: DTYPE.to_string(),
        layout: LAYOUT.to_string(),
    };
    let bytes = encode_f32(data)?;
    let data_path = dir.join(DATA_FILE);
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    let mpath = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&mpath, e))?;
    text.push('\n');
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

/// Writes `manifest.json` and `data.bin` into `dir`, creating it if needed.
/// Existing files are overwritten.
pub fn write_dataset(ds: &WeatherDataset, dir: &Path) -> Result<DatasetManifest> {
    write_parts(dir, *ds.grid(), ds.channels().to_vec(), ds.times(), ds.data())
}

/// Writes a raster as a one-time, one-channel dataset.
pub fn write_raster(
    raster: &Raster,
    channel: Channel,
    timestamp: Timestamp,
    dir: &Path,
) -> Result<DatasetManifest> {
    write_parts(dir, *raster.grid(), vec![channel], &[timestamp], raster.values())
}

/// Reads a raster written by [`write_raster`], checking the channel name.
pub fn read_raster(manifest_path: &Path, channel: &str) -> Result<(Raster, Timestamp)> {
    let ds = read_dataset(manifest_path)?;
    ensure!(
        ds.len() == 1 && ds.channels().len() == 1,
        Validation,
        "raster file must hold exactly one time and one channel, found {} and {}",
        ds.len(),
        ds.channels().len()
    );
    let values = ds.channel_slice(0, channel)?.to_vec();
    Ok((Raster::new(*ds.grid(), values)?, ds.times()[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn small(n_t: usize, values: Vec<f64>) -> WeatherDataset {
        let grid = GridSpec::from_spacing(55.0, 2.0, 0.25, 0.25, 2, 2).unwrap();
        let t0 = Utc.with_ymd_and_hms(2007, 1, 1, 12, 0, 0).unwrap();
        let times = (0..n_t).map(|d| t0 + chrono::Duration::days(d as i64)).collect();
        WeatherDataset::new(grid, vec![Channel::new("u100", "m/s")], times, values).unwrap()
    }

    #[test]
    fn round_trip_two_times() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small(2, vec![1.0, -2.5, 3.25, 4.0, 0.0, 1e-3 as f32 as f64, 7.0, 8.5]);
        write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
        assert_eq!(read_dataset(&dir.path().join(MANIFEST_FILE)).unwrap(), ds);
    }

    #[test]
    fn data_file_size_formula() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small(1, vec![1.0, 2.0, 3.0, 4.0]);
        let m = write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(m.element_count(), 4);
        let len = fs::metadata(dir.path().join(DATA_FILE)).unwrap().len();
        assert_eq!(len, 4 * 4);
    }

    #[test]
    fn manifest_keys_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small(1, vec![0.0; 4]), dir.path()).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap())
                .unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["channels", "data_file", "dtype", "format_version", "grid", "layout", "times"]
        );
        assert_eq!(v["times"][0], "2007-01-01T12:00:00Z");
        assert_eq!(v["dtype"], "f32le");
    }

    #[test]
    fn truncated_data_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small(2, vec![1.0; 8]), dir.path()).unwrap();
        let p = dir.path().join(DATA_FILE);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Corrupt(_))));
    }

    #[test]
    fn shuffled_times_fail_validation() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small(2, vec![1.0; 8]), dir.path()).unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        let mut m: DatasetManifest = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        m.times.swap(0, 1);
        fs::write(&p, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small(1, vec![1.0; 4]), dir.path()).unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&p).unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
        fs::write(&p, text).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(Error::Version { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn rewrite_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small(2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        write_dataset(&ds, dir.path()).unwrap();
        let a = (
            fs::read(dir.path().join(DATA_FILE)).unwrap(),
            fs::read(dir.path().join(MANIFEST_FILE)).unwrap(),
        );
        write_dataset(&ds, dir.path()).unwrap();
        let b = (
            fs::read(dir.path().join(DATA_FILE)).unwrap(),
            fs::read(dir.path().join(MANIFEST_FILE)).unwrap(),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn raster_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::from_spacing(55.0, 2.0, 0.1, 0.2, 3, 4).unwrap();
        let r = Raster::new(grid, (0..12).map(|k| k as f64 * 0.37).collect())
            .unwrap()
            .to_storage_precision();
        let ts = Utc.with_ymd_and_hms(2007, 6, 1, 12, 0, 0).unwrap();
        write_raster(&r, Channel::new("deficit", "m/s"), ts, dir.path()).unwrap();
        let (back, t) = read_raster(dir.path(), "deficit").unwrap();
        assert_eq!(back, r);
        assert_eq!(t, ts);
        assert!(matches!(read_raster(dir.path(), "speed"), Err(Error::Lookup(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn read_inverts_write(vals in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 12)) {
            let dir = tempfile::tempdir().unwrap();
            let ds = small(3, vals.iter().map(|&v| f64::from(v)).collect());
            write_dataset(&ds, dir.path()).unwrap();
            let back = read_dataset(dir.path()).unwrap();
            prop_assert!(back.data().iter().zip(ds.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back, ds);
        }
    }
}
