//! Lloyd's k-means with k-means++ seeding and best-of-n restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Features, WeatherDataset};
use crate::error::{ensure, Error, Result};
use crate::stats::squared_distance;

/// Relative slack allowed when checking that inertia never increases; Lloyd
/// steps are monotone in exact arithmetic and only rounding can break ties.
pub const INERTIA_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub n_init: usize,
    pub max_iter: usize,
    /// Stop once the relative inertia decrease drops below this.
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            seed: 0,
            n_init: 10,
            max_iter: 300,
            tol: 1e-6,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n_init(mut self, n_init: usize) -> Self {
        self.n_init = n_init;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        ensure!(self.k >= 1, Validation, "k must be at least 1");
        ensure!(n >= 1, Validation, "cannot cluster an empty dataset");
        ensure!(
            self.k <= n,
            Validation,
            "k = {} exceeds the number of datapoints ({n})",
            self.k
        );
        ensure!(self.max_iter >= 1, Validation, "max_iter must be at least 1");
        ensure!(self.n_init >= 1, Validation, "n_init must be at least 1");
        ensure!(self.tol >= 0.0, Validation, "tol must be non-negative");
        Ok(())
    }
}

/// Outcome of one seeded Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Inertia after the initial assignment and after every iteration.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

/// A fitted clustering of daily fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    /// Channels concatenated to form the feature vectors.
    pub channels: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub counts: Vec<usize>,
    /// Per cluster, the member datapoint nearest its centroid.
    pub representative_idx: Vec<usize>,
    pub inertia: f64,
    pub iterations_run: usize,
    pub seed: u64,
}

impl ClusterModel {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Indices of the datapoints labelled `cluster`, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    /// Nearest-centroid label for each row (lowest index on ties).
    pub fn predict(&self, features: &Features) -> Result<Vec<usize>> {
        ensure!(
            features.dim() == self.centroids[0].len(),
            Validation,
            "feature dimension {} does not match model dimension {}",
            features.dim(),
            self.centroids[0].len()
        );
        Ok(assign(features, &self.centroids)
            .into_iter()
            .map(|(l, _)| l)
            .collect())
    }

    pub fn channel_refs(&self) -> Vec<&str> {
        self.channels.iter().map(String::as_str).collect()
    }
}

/// Nearest centroid and squared distance for every row.
fn assign(features: &Features, centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    (0..features.n())
        .into_par_iter()
        .map(|i| {
            let x = features.row(i);
            let mut best = (0, f64::INFINITY);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = squared_distance(x, centroid);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect()
}

fn kmeans_plus_plus(features: &Features, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = features.n();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![features.row(first).to_vec()];
    let mut d2: Vec<f64> = features
        .rows()
        .map(|x| squared_distance(x, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave target at the very end of the cumulative sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // Every point coincides with a chosen centre; fall back to an
            // unchosen index so k distinct datapoints seed the run.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        let c = features.row(next).to_vec();
        for (i, x) in features.rows().enumerate() {
            d2[i] = d2[i].min(squared_distance(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Recomputes centroids as member means. Empty clusters take the point
/// farthest from its current centroid (from a cluster with spare members).
fn update_centroids(
    features: &Features,
    labels: &mut [usize],
    dist: &mut [f64],
    k: usize,
) -> Vec<Vec<f64>> {
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..labels.len() {
            if counts[labels[i]] > 1 && far.is_none_or(|f| dist[i] > dist[f]) {
                far = Some(i);
            }
        }
        let i = far.expect("k <= n guarantees a donor cluster");
        counts[labels[i]] -= 1;
        labels[i] = c;
        counts[c] = 1;
        dist[i] = 0.0;
    }
    let dim = features.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    for (i, x) in features.rows().enumerate() {
        for (s, v) in sums[labels[i]].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (c, s) in sums.iter_mut().enumerate() {
        let inv = 1.0 / counts[c] as f64;
        s.iter_mut().for_each(|v| *v *= inv);
    }
    sums
}

/// One Lloyd run from a k-means++ start drawn with `seed`.
pub fn lloyd(features: &Features, k: usize, seed: u64, max_iter: usize, tol: f64) -> LloydRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(features, k, &mut rng);
    let (mut labels, mut dist): (Vec<usize>, Vec<f64>) = assign(features, &centroids).into_iter().unzip();
    let mut inertia: f64 = dist.iter().sum();
    let mut history = vec![inertia];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        centroids = update_centroids(features, &mut labels, &mut dist, k);
        let (new_labels, new_dist): (Vec<usize>, Vec<f64>) =
            assign(features, &centroids).into_iter().unzip();
        let new_inertia: f64 = new_dist.iter().sum();
        debug_assert!(
            new_inertia <= inertia * (1.0 + INERTIA_SLACK) + f64::MIN_POSITIVE,
            "inertia increased: {inertia} -> {new_inertia}"
        );
        history.push(new_inertia);
        let unchanged = new_labels == labels;
        let small_step = inertia <= 0.0 || (inertia - new_inertia) / inertia < tol;
        labels = new_labels;
        dist = new_dist;
        inertia = new_inertia;
        if unchanged || small_step {
            break;
        }
    }
    // Coincident points can tie to one centre and leave others empty after
    // the last assignment. Hand each empty cluster a donor point; this never
    // raises the inertia.
    if labels.iter().fold(vec![false; k], |mut seen, &l| {
        seen[l] = true;
        seen
    }).contains(&false)
    {
        centroids = update_centroids(features, &mut labels, &mut dist, k);
        inertia = features
            .rows()
            .zip(&labels)
            .map(|(x, &l)| squared_distance(x, &centroids[l]))
            .sum();
        history.push(inertia);
    }
    LloydRun {
        centroids,
        labels,
        inertia,
        inertia_history: history,
        iterations,
    }
}

/// Per cluster, the member with the smallest squared distance to the
/// centroid; ties go to the lowest index.
pub fn representatives(features: &Features, centroids: &[Vec<f64>], labels: &[usize]) -> Result<Vec<usize>> {
    let mut best: Vec<Option<(usize, f64)>> = vec![None; centroids.len()];
    for (i, x) in features.rows().enumerate() {
        let c = labels[i];
        let d = squared_distance(x, &centroids[c]);
        if best[c].is_none_or(|(_, bd)| d < bd) {
            best[c] = Some((i, d));
        }
    }
    best.into_iter()
        .enumerate()
        .map(|(c, b)| {
            b.map(|(i, _)| i)
                .ok_or_else(|| Error::Validation(format!("cluster {c} has no members")))
        })
        .collect()
}

impl KMeansConfig {
    /// Fits on a feature matrix; returns the best model and every restart.
    pub fn fit_traced(&self, features: &Features) -> Result<(ClusterModel, Vec<LloydRun>)> {
        self.validate(features.n())?;
        let mut seeder = ChaCha8Rng::seed_from_u64(self.seed);
        let seeds: Vec<u64> = (0..self.n_init).map(|_| seeder.random()).collect();
        let runs: Vec<LloydRun> = seeds
            .iter()
            .map(|&s| lloyd(features, self.k, s, self.max_iter, self.tol))
            .collect();
        let mut best = 0;
        for (r, run) in runs.iter().enumerate() {
            if run.inertia < runs[best].inertia {
                best = r;
            }
        }
        let run = &runs[best];
        let mut counts = vec![0; self.k];
        for &l in &run.labels {
            counts[l] += 1;
        }
        let representative_idx = representatives(features, &run.centroids, &run.labels)?;
        let model = ClusterModel {
            k: self.k,
            channels: Vec::new(),
            centroids: run.centroids.clone(),
            labels: run.labels.clone(),
            counts,
            representative_idx,
            inertia: run.inertia,
            iterations_run: run.iterations,
            seed: self.seed,
        };
        Ok((model, runs))
    }

    pub fn fit_features(&self, features: &Features) -> Result<ClusterModel> {
        self.fit_traced(features).map(|(m, _)| m)
    }

    /// Clusters the daily fields of `ds` on the concatenated `channels`.
    pub fn fit(&self, ds: &WeatherDataset, channels: &[&str]) -> Result<ClusterModel> {
        let features = ds.features(channels)?;
        let mut model = self.fit_features(&features)?;
        model.channels = channels.iter().map(|s| s.to_string()).collect();
        Ok(model)
    }
}

/// Fits k-means on `ds` with default restarts and convergence settings.
pub fn kmeans_fit(
    ds: &WeatherDataset,
    channels: &[&str],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel> {
    KMeansConfig::new(k)
        .seed(seed)
        .max_iter(max_iter)
        .tol(tol)
        .fit(ds, channels)
}

/// Representative datapoint of every cluster of a model fitted on `ds`.
pub fn nearest_datapoint(model: &ClusterModel, ds: &WeatherDataset) -> Result<Vec<usize>> {
    ensure!(
        model.n() == ds.len(),
        Validation,
        "model has {} labels but dataset has {} datapoints",
        model.n(),
        ds.len()
    );
    let features = ds.features(&model.channel_refs())?;
    representatives(&features, &model.centroids, &model.labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_d(points: &[f64]) -> Features {
        Features::new(points.len(), 1, points.to_vec()).unwrap()
    }

    /// Exhaustive minimum SSE over all labelings into at most k groups.
    fn brute_force_inertia(points: &[f64], k: usize) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        let total = k.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let mut sums = vec![0.0; k];
            let mut counts = vec![0usize; k];
            let mut labels = vec![0; n];
            for i in 0..n {
                labels[i] = c % k;
                c /= k;
                sums[labels[i]] += points[i];
                counts[labels[i]] += 1;
            }
            let sse: f64 = (0..n)
                .map(|i| {
                    let m = sums[labels[i]] / counts[labels[i]] as f64;
                    (points[i] - m).powi(2)
                })
                .sum();
            best = best.min(sse);
        }
        best
    }

    #[test]
    fn two_tight_pairs() {
        let pts = [0.0, 0.1, 10.0, 10.1];
        let m = KMeansConfig::new(2).seed(3).fit_features(&one_d(&pts)).unwrap();
        let mut c: Vec<f64> = m.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(c[0], 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], 10.05, epsilon = 1e-12);
        assert_abs_diff_eq!(m.inertia, 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(m.inertia, brute_force_inertia(&pts, 2), epsilon = 1e-12);
        assert_eq!(m.counts, vec![2, 2]);
    }

    #[test]
    fn k_equals_n() {
        let pts = [3.0, -1.0, 7.5, 2.0, 2.0];
        let m = KMeansConfig::new(5).seed(1).fit_features(&one_d(&pts)).unwrap();
        assert_eq!(m.inertia, 0.0);
        assert_eq!(m.counts, vec![1; 5]);
        let mut c: Vec<f64> = m.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![-1.0, 2.0, 2.0, 3.0, 7.5]);
    }

    #[test]
    fn single_cluster_is_mean() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 0.0], vec![5.0, 4.0], vec![-1.0, 2.0]];
        let f = Features::from_rows(&rows).unwrap();
        let m = KMeansConfig::new(1).fit_features(&f).unwrap();
        assert_abs_diff_eq!(m.centroids[0][0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.centroids[0][1], 2.0, epsilon = 1e-12);
        // n * total variance = sum of squared deviations from the mean
        let sse: f64 = rows.iter().map(|r| (r[0] - 2.0).powi(2) + (r[1] - 2.0).powi(2)).sum();
        assert_abs_diff_eq!(m.inertia, sse, epsilon = 1e-12);
    }

    #[test]
    fn precondition_errors() {
        let f = one_d(&[1.0, 2.0]);
        assert!(matches!(KMeansConfig::new(3).fit_features(&f), Err(Error::Validation(_))));
        assert!(matches!(KMeansConfig::new(0).fit_features(&f), Err(Error::Validation(_))));
        assert!(KMeansConfig::new(1).max_iter(0).fit_features(&f).is_err());
        assert!(KMeansConfig::new(1).tol(-1.0).fit_features(&f).is_err());
    }

    #[test]
    fn labels_are_nearest_at_termination() {
        let pts: Vec<f64> = (0..40).map(|i| ((i * 37) % 17) as f64 + (i % 3) as f64 * 20.0).collect();
        let f = one_d(&pts);
        let m = KMeansConfig::new(4).seed(11).max_iter(2).fit_features(&f).unwrap();
        assert_eq!(m.predict(&f).unwrap(), m.labels);
        assert_eq!(m.counts.iter().sum::<usize>(), 40);
    }

    #[test]
    fn representative_rules() {
        // Member exactly at the centroid wins.
        let f = one_d(&[0.0, 1.0, 2.0, 10.0]);
        let reps = representatives(&f, &[vec![1.0], vec![10.0]], &[0, 0, 0, 1]).unwrap();
        assert_eq!(reps, vec![1, 3]);
        // Two equidistant members: earlier index wins.
        let f = one_d(&[0.0, 2.0, 10.0]);
        let reps = representatives(&f, &[vec![1.0], vec![10.0]], &[0, 0, 1]).unwrap();
        assert_eq!(reps, vec![0, 2]);
        assert!(representatives(&f, &[vec![1.0], vec![10.0]], &[0, 0, 0]).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let pts: Vec<f64> = (0..60).map(|i| ((i * 7919) % 101) as f64).collect();
        let f = one_d(&pts);
        let a = KMeansConfig::new(5).seed(42).fit_features(&f).unwrap();
        let b = KMeansConfig::new(5).seed(42).fit_features(&f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_cluster_is_refilled() {
        let f = one_d(&[0.0, 0.0, 0.0, 5.0]);
        let mut labels = vec![0, 0, 0, 0];
        let mut dist = vec![1.0, 1.0, 1.0, 9.0];
        let c = update_centroids(&f, &mut labels, &mut dist, 2);
        assert_eq!(labels, vec![0, 0, 0, 1]);
        assert_eq!(c, vec![vec![0.0], vec![5.0]]);
    }

    #[test]
    fn brute_force_agreement_small() {
        let mut hits = 0;
        for case in 0..20u64 {
            let pts: Vec<f64> = (0..9)
                .map(|i| ((i as u64 * 2_654_435_761 + case * 97) % 1000) as f64 / 10.0)
                .collect();
            let m = KMeansConfig::new(3).seed(case).fit_features(&one_d(&pts)).unwrap();
            let opt = brute_force_inertia(&pts, 3);
            assert!(m.inertia >= opt * (1.0 - 1e-12), "case {case} beat the optimum");
            if m.inertia <= opt * (1.0 + 1e-9) + 1e-12 {
                hits += 1;
            }
        }
        assert!(hits >= 19, "only {hits}/20 optimal");
    }
}
