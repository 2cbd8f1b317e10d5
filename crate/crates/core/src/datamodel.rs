//! Grid geometry and the gridded field types shared by the rest of the crate.
//!
//! Grids are regular in degrees (plate carrée). Row `i` of a grid sits at
//! latitude `lat_min + i * d_lat`, column `j` at longitude `lon_min + j * d_lon`,
//! and every 2D array is stored row-major by `(lat, lon)`.

use std::collections::HashSet;
use std::ops::Range;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Mean Earth radius used for degree-to-meter scale factors.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters per degree of latitude on the reference sphere.
pub const M_PER_DEG_LAT: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

pub type Timestamp = DateTime<Utc>;

/// A geographic point in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Regular latitude/longitude grid.
///
/// Stored as origin, spacing and counts so that single-row or single-column
/// windows of a parent grid keep their spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRepr", into = "GridSpecRepr")]
pub struct GridSpec {
    lat_min: f64,
    lon_min: f64,
    d_lat: f64,
    d_lon: f64,
    n_lat: usize,
    n_lon: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpecRepr {
    lat_min: f64,
    lon_min: f64,
    d_lat: f64,
    d_lon: f64,
    n_lat: usize,
    n_lon: usize,
}

impl TryFrom<GridSpecRepr> for GridSpec {
    type Error = Error;

    fn try_from(r: GridSpecRepr) -> Result<Self> {
        GridSpec::from_spacing(r.lat_min, r.lon_min, r.d_lat, r.d_lon, r.n_lat, r.n_lon)
    }
}

impl From<GridSpec> for GridSpecRepr {
    fn from(g: GridSpec) -> Self {
        GridSpecRepr {
            lat_min: g.lat_min,
            lon_min: g.lon_min,
            d_lat: g.d_lat,
            d_lon: g.d_lon,
            n_lat: g.n_lat,
            n_lon: g.n_lon,
        }
    }
}

impl GridSpec {
    /// Builds a grid from its corner coordinates. Requires at least two
    /// points along each axis so that the spacing is defined.
    pub fn from_bounds(
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
        n_lat: usize,
        n_lon: usize,
    ) -> Result<Self> {
        ensure!(
            n_lat >= 2 && n_lon >= 2,
            Validation,
            "grid needs at least 2 points per axis, got {n_lat}x{n_lon}"
        );
        ensure!(
            lat_min < lat_max && lon_min < lon_max,
            Validation,
            "grid bounds must be increasing: lat {lat_min}..{lat_max}, lon {lon_min}..{lon_max}"
        );
        let d_lat = (lat_max - lat_min) / (n_lat - 1) as f64;
        let d_lon = (lon_max - lon_min) / (n_lon - 1) as f64;
        Self::from_spacing(lat_min, lon_min, d_lat, d_lon, n_lat, n_lon)
    }

    pub fn from_spacing(
        lat_min: f64,
        lon_min: f64,
        d_lat: f64,
        d_lon: f64,
        n_lat: usize,
        n_lon: usize,
    ) -> Result<Self> {
        ensure!(
            n_lat >= 1 && n_lon >= 1,
            Validation,
            "grid must be non-empty, got {n_lat}x{n_lon}"
        );
        ensure!(
            lat_min.is_finite() && lon_min.is_finite(),
            Validation,
            "grid origin must be finite"
        );
        ensure!(
            d_lat > 0.0 && d_lon > 0.0 && d_lat.is_finite() && d_lon.is_finite(),
            Validation,
            "grid spacing must be strictly positive, got d_lat={d_lat}, d_lon={d_lon}"
        );
        Ok(Self {
            lat_min,
            lon_min,
            d_lat,
            d_lon,
            n_lat,
            n_lon,
        })
    }

    pub fn lat_min(&self) -> f64 {
        self.lat_min
    }

    pub fn lon_min(&self) -> f64 {
        self.lon_min
    }

    pub fn lat_max(&self) -> f64 {
        self.lat(self.n_lat - 1)
    }

    pub fn lon_max(&self) -> f64 {
        self.lon(self.n_lon - 1)
    }

    pub fn d_lat(&self) -> f64 {
        self.d_lat
    }

    pub fn d_lon(&self) -> f64 {
        self.d_lon
    }

    pub fn n_lat(&self) -> usize {
        self.n_lat
    }

    pub fn n_lon(&self) -> usize {
        self.n_lon
    }

    /// Number of cells, `n_lat * n_lon`.
    pub fn cells(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn lat(&self, i: usize) -> f64 {
        self.lat_min + i as f64 * self.d_lat
    }

    pub fn lon(&self, j: usize) -> f64 {
        self.lon_min + j as f64 * self.d_lon
    }

    pub fn center(&self) -> LatLon {
        LatLon::new(
            0.5 * (self.lat_min + self.lat_max()),
            0.5 * (self.lon_min + self.lon_max()),
        )
    }

    /// Fractional `(row, col)` index of a point; integral at grid nodes.
    pub fn fractional_index(&self, p: LatLon) -> (f64, f64) {
        (
            (p.lat - self.lat_min) / self.d_lat,
            (p.lon - self.lon_min) / self.d_lon,
        )
    }

    /// True if the point lies inside the closed hull of the grid nodes.
    pub fn contains(&self, p: LatLon) -> bool {
        let (fi, fj) = self.fractional_index(p);
        fi >= 0.0 && fj >= 0.0 && fi <= (self.n_lat - 1) as f64 && fj <= (self.n_lon - 1) as f64
    }

    /// Index of the grid node nearest to `p`, or `None` if `p` is outside.
    pub fn nearest_cell(&self, p: LatLon) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let (fi, fj) = self.fractional_index(p);
        Some((fi.round() as usize, fj.round() as usize))
    }

    /// Scale factors `(m per degree lat, m per degree lon)` evaluated at the
    /// grid-center latitude.
    pub fn meters_per_degree(&self) -> (f64, f64) {
        let lat_c = self.center().lat.to_radians();
        (M_PER_DEG_LAT, M_PER_DEG_LAT * lat_c.cos())
    }

    /// Local Cartesian frame centred on `origin` using this grid's scale factors.
    pub fn local_frame(&self, origin: LatLon) -> LocalFrame {
        let (m_lat, m_lon) = self.meters_per_degree();
        LocalFrame {
            origin,
            m_per_deg_lat: m_lat,
            m_per_deg_lon: m_lon,
        }
    }

    /// Bilinear sample of a row-major `n_lat x n_lon` array at a fractional
    /// index. Returns `None` outside the node hull.
    pub fn bilinear(&self, values: &[f64], fi: f64, fj: f64) -> Option<f64> {
        debug_assert_eq!(values.len(), self.cells());
        let max_i = (self.n_lat - 1) as f64;
        let max_j = (self.n_lon - 1) as f64;
        if !(fi >= 0.0 && fj >= 0.0 && fi <= max_i && fj <= max_j) {
            return None;
        }
        let i0 = (fi.floor() as usize).min(self.n_lat.saturating_sub(2));
        let j0 = (fj.floor() as usize).min(self.n_lon.saturating_sub(2));
        let i1 = (i0 + 1).min(self.n_lat - 1);
        let j1 = (j0 + 1).min(self.n_lon - 1);
        let ti = fi - i0 as f64;
        let tj = fj - j0 as f64;
        let at = |i: usize, j: usize| values[i * self.n_lon + j];
        let top = at(i0, j0) * (1.0 - tj) + at(i0, j1) * tj;
        let bottom = at(i1, j0) * (1.0 - tj) + at(i1, j1) * tj;
        Some(top * (1.0 - ti) + bottom * ti)
    }
}

/// East/north meter coordinates around an origin, using fixed per-degree
/// scale factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub origin: LatLon,
    pub m_per_deg_lat: f64,
    pub m_per_deg_lon: f64,
}

impl LocalFrame {
    /// `(east, north)` offset in meters of `p` from the origin.
    pub fn to_local(&self, p: LatLon) -> (f64, f64) {
        (
            (p.lon - self.origin.lon) * self.m_per_deg_lon,
            (p.lat - self.origin.lat) * self.m_per_deg_lat,
        )
    }

    pub fn to_geo(&self, east: f64, north: f64) -> LatLon {
        LatLon::new(
            self.origin.lat + north / self.m_per_deg_lat,
            self.origin.lon + east / self.m_per_deg_lon,
        )
    }
}

/// Named variable channel, e.g. `u100 [m/s]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub units: String,
}

impl Channel {
    pub fn new(name: impl Into<String>, units: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            units: units.into(),
        }
    }
}

fn check_channels(channels: &[Channel]) -> Result<()> {
    ensure!(!channels.is_empty(), Validation, "at least one channel is required");
    let mut seen = HashSet::new();
    for c in channels {
        ensure!(
            seen.insert(c.name.as_str()),
            Validation,
            "duplicate channel name {:?}",
            c.name
        );
    }
    Ok(())
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "{what}: non-finite value at flat index {pos}"
        )));
    }
    Ok(())
}

/// One timestamp of gridded data: the unit that gets clustered.
///
/// Values are channel-major, then row-major by `(lat, lon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedField {
    grid: GridSpec,
    timestamp: Timestamp,
    channels: Vec<Channel>,
    values: Vec<f64>,
}

impl GriddedField {
    pub fn new(
        grid: GridSpec,
        timestamp: Timestamp,
        channels: Vec<Channel>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_channels(&channels)?;
        ensure!(
            values.len() == channels.len() * grid.cells(),
            Validation,
            "field has {} values, expected {} channels x {} cells",
            values.len(),
            channels.len(),
            grid.cells()
        );
        check_finite(&values, "field")?;
        Ok(Self {
            grid,
            timestamp,
            channels,
            values,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn timestamp(&self) -> Timestamp {
        self.timestamp
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Lookup(format!("no channel named {name:?}")))
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        let c = self.channel_index(name)?;
        let n = self.grid.cells();
        Ok(&self.values[c * n..(c + 1) * n])
    }

    /// Concatenates the requested channels in the order given.
    pub fn vectorize(&self, names: &[&str]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(names.len() * self.grid.cells());
        for name in names {
            out.extend_from_slice(self.channel(name)?);
        }
        Ok(out)
    }

    /// Inverse of [`GriddedField::vectorize`] for a full channel list.
    pub fn from_vector(
        grid: GridSpec,
        timestamp: Timestamp,
        channels: Vec<Channel>,
        vector: Vec<f64>,
    ) -> Result<Self> {
        Self::new(grid, timestamp, channels, vector)
    }
}

/// Time-ordered stack of fields sharing one grid and channel set.
///
/// Data is stored time-major in `time, channel, lat, lon` order, the same
/// layout as the on-disk format.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherDataset {
    grid: GridSpec,
    channels: Vec<Channel>,
    times: Vec<Timestamp>,
    data: Vec<f64>,
}

impl WeatherDataset {
    pub fn new(
        grid: GridSpec,
        channels: Vec<Channel>,
        times: Vec<Timestamp>,
        data: Vec<f64>,
    ) -> Result<Self> {
        check_channels(&channels)?;
        ensure!(!times.is_empty(), Validation, "dataset needs at least one timestamp");
        if let Some(w) = times.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "timestamps must be strictly increasing: {} then {}",
                times[w], times[w + 1]
            )));
        }
        let expected = times.len() * channels.len() * grid.cells();
        ensure!(
            data.len() == expected,
            Validation,
            "dataset has {} values, expected {expected}",
            data.len()
        );
        check_finite(&data, "dataset")?;
        Ok(Self {
            grid,
            channels,
            times,
            data,
        })
    }

    /// Stacks fields; all must share grid and channel list.
    pub fn from_fields(fields: &[GriddedField]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::Validation("dataset needs at least one field".into()))?;
        let mut data = Vec::with_capacity(fields.len() * first.values.len());
        let mut times = Vec::with_capacity(fields.len());
        for f in fields {
            ensure!(
                f.grid == first.grid && f.channels == first.channels,
                Validation,
                "field at {} has a different grid or channel set",
                f.timestamp
            );
            data.extend_from_slice(&f.values);
            times.push(f.timestamp);
        }
        Self::new(first.grid, first.channels.clone(), times, data)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn times(&self) -> &[Timestamp] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Raw `time, channel, lat, lon` buffer.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Lookup(format!("no channel named {name:?}")))
    }

    fn frame_len(&self) -> usize {
        self.channels.len() * self.grid.cells()
    }

    /// Borrowed view of one channel at one time.
    pub fn channel_slice(&self, t: usize, name: &str) -> Result<&[f64]> {
        ensure!(t < self.len(), Range, "time index {t} out of range (len {})", self.len());
        let c = self.channel_index(name)?;
        let n = self.grid.cells();
        let start = t * self.frame_len() + c * n;
        Ok(&self.data[start..start + n])
    }

    pub fn field(&self, t: usize) -> Result<GriddedField> {
        ensure!(t < self.len(), Range, "time index {t} out of range (len {})", self.len());
        let fl = self.frame_len();
        Ok(GriddedField {
            grid: self.grid,
            timestamp: self.times[t],
            channels: self.channels.clone(),
            values: self.data[t * fl..(t + 1) * fl].to_vec(),
        })
    }

    /// Index of an exact timestamp.
    pub fn time_index(&self, ts: Timestamp) -> Option<usize> {
        self.times.binary_search(&ts).ok()
    }

    /// Feature matrix with one row per timestamp, built by concatenating the
    /// named channels.
    pub fn features(&self, names: &[&str]) -> Result<Features> {
        ensure!(!names.is_empty(), Validation, "no channels selected for features");
        let idx = names
            .iter()
            .map(|n| self.channel_index(n))
            .collect::<Result<Vec<_>>>()?;
        let n = self.grid.cells();
        let dim = idx.len() * n;
        let fl = self.frame_len();
        let mut data = Vec::with_capacity(self.len() * dim);
        for t in 0..self.len() {
            for &c in &idx {
                let start = t * fl + c * n;
                data.extend_from_slice(&self.data[start..start + n]);
            }
        }
        Features::new(self.len(), dim, data)
    }

    /// Restricts the dataset to a rectangular index window. The parent is
    /// left untouched.
    pub fn extract_window(&self, w: &DomainWindow) -> Result<WeatherDataset> {
        w.check(&self.grid)?;
        let grid = w.grid(&self.grid)?;
        let n_parent = self.grid.cells();
        let mut data = Vec::with_capacity(self.len() * self.channels.len() * grid.cells());
        for t in 0..self.len() {
            for c in 0..self.channels.len() {
                let base = (t * self.channels.len() + c) * n_parent;
                for i in w.lat.clone() {
                    let row = base + i * self.grid.n_lon;
                    data.extend_from_slice(&self.data[row + w.lon.start..row + w.lon.end]);
                }
            }
        }
        WeatherDataset::new(grid, self.channels.clone(), self.times.clone(), data)
    }

    /// Subset of timestamps `range`, same grid and channels.
    pub fn slice_times(&self, range: Range<usize>) -> Result<WeatherDataset> {
        ensure!(
            range.start < range.end && range.end <= self.len(),
            Range,
            "time range {range:?} invalid for {} timestamps",
            self.len()
        );
        let fl = self.frame_len();
        WeatherDataset::new(
            self.grid,
            self.channels.clone(),
            self.times[range.clone()].to_vec(),
            self.data[range.start * fl..range.end * fl].to_vec(),
        )
    }
}

/// Half-open index window `lat x lon` into a parent grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainWindow {
    pub lat: Range<usize>,
    pub lon: Range<usize>,
}

impl DomainWindow {
    pub fn new(lat: Range<usize>, lon: Range<usize>) -> Self {
        Self { lat, lon }
    }

    /// The whole of `grid`.
    pub fn full(grid: &GridSpec) -> Self {
        Self::new(0..grid.n_lat(), 0..grid.n_lon())
    }

    /// Smallest window holding every node inside the given degree bounds.
    pub fn from_bounds(
        grid: &GridSpec,
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
    ) -> Result<Self> {
        let lat: Vec<usize> = (0..grid.n_lat())
            .filter(|&i| (lat_min..=lat_max).contains(&grid.lat(i)))
            .collect();
        let lon: Vec<usize> = (0..grid.n_lon())
            .filter(|&j| (lon_min..=lon_max).contains(&grid.lon(j)))
            .collect();
        match (lat.first(), lat.last(), lon.first(), lon.last()) {
            (Some(&a), Some(&b), Some(&c), Some(&d)) => Ok(Self::new(a..b + 1, c..d + 1)),
            _ => Err(Error::Range(format!(
                "bounds lat {lat_min}..{lat_max}, lon {lon_min}..{lon_max} contain no grid nodes"
            ))),
        }
    }

    pub fn check(&self, grid: &GridSpec) -> Result<()> {
        ensure!(
            self.lat.start < self.lat.end && self.lon.start < self.lon.end,
            Range,
            "window {:?}x{:?} is empty",
            self.lat,
            self.lon
        );
        ensure!(
            self.lat.end <= grid.n_lat() && self.lon.end <= grid.n_lon(),
            Range,
            "window {:?}x{:?} exceeds parent grid {}x{}",
            self.lat,
            self.lon,
            grid.n_lat(),
            grid.n_lon()
        );
        Ok(())
    }

    /// Grid geometry of the window inside `parent`.
    pub fn grid(&self, parent: &GridSpec) -> Result<GridSpec> {
        self.check(parent)?;
        GridSpec::from_spacing(
            parent.lat(self.lat.start),
            parent.lon(self.lon.start),
            parent.d_lat(),
            parent.d_lon(),
            self.lat.len(),
            self.lon.len(),
        )
    }

    /// Expresses `inner`, given relative to this window, in parent indices.
    pub fn compose(&self, inner: &DomainWindow) -> Result<DomainWindow> {
        ensure!(
            inner.lat.end <= self.lat.len() && inner.lon.end <= self.lon.len(),
            Range,
            "inner window {:?}x{:?} exceeds outer window size {}x{}",
            inner.lat,
            inner.lon,
            self.lat.len(),
            self.lon.len()
        );
        Ok(DomainWindow::new(
            self.lat.start + inner.lat.start..self.lat.start + inner.lat.end,
            self.lon.start + inner.lon.start..self.lon.start + inner.lon.end,
        ))
    }
}

/// Dense row-major `n x dim` matrix of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(n >= 1 && dim >= 1, Validation, "feature matrix must be non-empty");
        ensure!(
            data.len() == n * dim,
            Validation,
            "feature buffer has {} values, expected {n}x{dim}",
            data.len()
        );
        Ok(Self { n, dim, data })
    }

    /// One feature vector per row.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        ensure!(
            rows.iter().all(|r| r.len() == dim),
            Validation,
            "feature rows have unequal length"
        );
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<Features> {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            ensure!(i < self.n, Range, "row {i} out of range ({} rows)", self.n);
            data.extend_from_slice(self.row(i));
        }
        Features::new(idx.len(), self.dim, data)
    }
}

/// Single-channel 2D array on a grid, e.g. a wake deficit in m/s.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Raster {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        ensure!(
            values.len() == grid.cells(),
            Validation,
            "raster has {} values, grid has {} cells",
            values.len(),
            grid.cells()
        );
        check_finite(&values, "raster")?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.cells()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n_lon() + j]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Row/column of the largest value (first on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        (best / self.grid.n_lon(), best % self.grid.n_lon())
    }

    /// `self += w * other`; grids must match.
    pub fn add_scaled(&mut self, other: &Raster, w: f64) -> Result<()> {
        ensure!(
            self.grid == other.grid,
            Validation,
            "raster grids differ"
        );
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += w * b;
        }
        Ok(())
    }

    pub fn scaled(&self, w: f64) -> Raster {
        Raster {
            grid: self.grid,
            values: self.values.iter().map(|v| v * w).collect(),
        }
    }

    /// Copy with every value rounded through `f32`, i.e. the precision the
    /// on-disk format stores.
    pub fn to_storage_precision(&self) -> Raster {
        Raster {
            grid: self.grid,
            values: self.values.iter().map(|&v| v as f32 as f64).collect(),
        }
    }
}

/// Speed and mathematical flow angle of a horizontal wind vector.
///
/// The angle is `atan2(v, u)` in `(-pi, pi]`, measured counter-clockwise
/// from east and pointing where the wind blows toward. Calm air maps to 0.
pub fn wind_speed_direction(u: f64, v: f64) -> (f64, f64) {
    let speed = u.hypot(v);
    if speed == 0.0 {
        return (0.0, 0.0);
    }
    let theta = v.atan2(u);
    // atan2 returns -pi for (negative, -0.0); fold onto the half-open interval.
    let theta = if theta <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        theta
    };
    (speed, theta)
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r += TAU;
    }
    r
}
