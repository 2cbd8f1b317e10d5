//! Shared fixtures for the benchmarks: the reference scenario, clustered
//! once, with its cluster wakes and aggregation inputs.

use windregime::aggregate::AggregationInputs;
use windregime::flowsim::simulate_clusters;
use windregime::ingest::reference_scenario;
use windregime::{default_farm, ClusterModel, FarmSpec, JensenSolver, KMeansConfig, WakeResult, WeatherDataset};

pub const CHANNELS: [&str; 2] = ["u100", "v100"];
pub const SEED: u64 = 20_070_101;

pub struct Fixture {
    pub ds: WeatherDataset,
    pub farm: FarmSpec,
    pub model: ClusterModel,
    pub wakes: Vec<WakeResult>,
}

impl Fixture {
    pub fn reference(k: usize) -> Self {
        let (ds, _) = reference_scenario().generate().expect("reference scenario generates");
        let farm = default_farm();
        let model = KMeansConfig::new(k).seed(SEED).fit(&ds, &CHANNELS).expect("clustering succeeds");
        let wakes = simulate_clusters(&model, &ds, &farm, &JensenSolver::default()).expect("solver runs");
        Self { ds, farm, model, wakes }
    }

    /// Aggregation inputs for the second year of the scenario.
    pub fn inputs(&self) -> AggregationInputs {
        let n = self.ds.len();
        AggregationInputs::from_dataset(&self.model, self.wakes.clone(), &self.ds, n / 2..n, &self.farm)
            .expect("inputs are consistent")
    }
}
