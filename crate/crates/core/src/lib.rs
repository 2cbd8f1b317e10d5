//! Cluster-then-simulate estimation of long-term wind farm power and
//! downstream wakes.
//!
//! Daily gridded wind fields are clustered with k-means; a wake solver runs
//! once per cluster on the datapoint nearest each centroid; the per-cluster
//! results are combined either as an occupancy-weighted sum or with a
//! per-day speed-ratio and wake-rotation correction. The [`validate`] module
//! scores those estimates against simulating every day.

pub mod aggregate;
pub mod clustering;
pub mod datamodel;
mod error;
pub mod farm;
pub mod flowsim;
pub mod ingest;
pub mod stats;
pub mod validate;

pub use aggregate::{AggregationInputs, LongTermPrediction, Method};
pub use clustering::{ClusterModel, ElbowReport, KMeansConfig, TransitionMatrix};
pub use datamodel::{
    wind_speed_direction, Channel, DomainWindow, Features, GridSpec, GriddedField, LatLon, Raster,
    Timestamp, WeatherDataset,
};
pub use error::{Error, Result};
pub use farm::{default_farm, FarmSpec, TurbineSpec};
pub use flowsim::{FlowSolver, InflowCondition, JensenSolver, WakeResult};
pub use validate::{OracleResult, ValidationReport};
