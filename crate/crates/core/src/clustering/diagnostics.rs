//! Elbow heuristics (average distance, average intra-cluster correlation,
//! silhouette) and day-to-day label transition matrices.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::{ClusterModel, KMeansConfig};
use crate::datamodel::{Features, Timestamp, WeatherDataset};
use crate::error::{ensure, Result};
use crate::stats::{squared_distance, standardize};

/// Symmetric `n x n` matrix stored densely.
#[derive(Debug, Clone)]
pub struct Pairwise {
    n: usize,
    data: Vec<f64>,
}

impl Pairwise {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn build(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let data = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| if i == j { f64::NAN } else { f(i.min(j), i.max(j)) })
            .collect();
        Self { n, data }
    }

    /// Euclidean distances between rows.
    pub fn distances(features: &Features) -> Self {
        Self::build(features.n(), |i, j| {
            squared_distance(features.row(i), features.row(j)).sqrt()
        })
    }

    /// Pearson correlations between rows; constant rows correlate as 0.
    pub fn correlations(features: &Features) -> Self {
        let std: Vec<Option<Vec<f64>>> = features.rows().map(standardize).collect();
        Self::build(features.n(), |i, j| match (&std[i], &std[j]) {
            (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0),
            _ => 0.0,
        })
    }
}

fn groups(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut g = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        g[l].push(i);
    }
    g
}

/// Mean silhouette `(b - a) / max(a, b)` over all points. Points alone in
/// their cluster score 0. `None` when fewer than two clusters are occupied.
pub fn silhouette_score(dist: &Pairwise, labels: &[usize], k: usize) -> Option<f64> {
    let g = groups(labels, k);
    if g.iter().filter(|m| !m.is_empty()).count() < 2 {
        return None;
    }
    let mean_to = |i: usize, members: &[usize]| {
        let (s, c) = members
            .iter()
            .filter(|&&j| j != i)
            .fold((0.0, 0usize), |(s, c), &j| (s + dist.get(i, j), c + 1));
        s / c as f64
    };
    let total: f64 = (0..labels.len())
        .map(|i| {
            let own = &g[labels[i]];
            if own.len() < 2 {
                return 0.0;
            }
            let a = mean_to(i, own);
            let b = g
                .iter()
                .enumerate()
                .filter(|(c, m)| *c != labels[i] && !m.is_empty())
                .map(|(_, m)| mean_to(i, m))
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .sum();
    Some(total / labels.len() as f64)
}

/// Mean over clusters (with at least two members) of the mean pairwise
/// Pearson correlation between member feature vectors.
pub fn mean_intra_cluster_correlation(corr: &Pairwise, labels: &[usize], k: usize) -> Option<f64> {
    let per_cluster: Vec<f64> = groups(labels, k)
        .iter()
        .filter(|m| m.len() >= 2)
        .map(|m| {
            let mut s = 0.0;
            let mut c = 0usize;
            for (a, &i) in m.iter().enumerate() {
                for &j in &m[a + 1..] {
                    s += corr.get(i, j);
                    c += 1;
                }
            }
            s / c as f64
        })
        .collect();
    if per_cluster.is_empty() {
        None
    } else {
        Some(per_cluster.iter().sum::<f64>() / per_cluster.len() as f64)
    }
}

/// Mean Euclidean distance from each point to its own centroid.
pub fn mean_centroid_distance(features: &Features, model: &ClusterModel) -> f64 {
    let total: f64 = features
        .rows()
        .zip(&model.labels)
        .map(|(x, &l)| squared_distance(x, &model.centroids[l]).sqrt())
        .sum();
    total / features.n() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowRow {
    pub k: usize,
    pub avg_distance: f64,
    pub avg_correlation: Option<f64>,
    /// Undefined for `k = 1`.
    pub silhouette: Option<f64>,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowReport {
    pub rows: Vec<ElbowRow>,
}

impl ElbowReport {
    /// `k,avg_distance,avg_correlation,silhouette`; undefined values are empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("k,avg_distance,avg_correlation,silhouette\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.k,
                r.avg_distance,
                opt(r.avg_correlation),
                opt(r.silhouette)
            );
        }
        out
    }

    /// `k` with the highest silhouette, if any row has one.
    pub fn best_silhouette_k(&self) -> Option<usize> {
        self.rows
            .iter()
            .filter_map(|r| r.silhouette.map(|s| (r.k, s)))
            .fold(None, |best: Option<(usize, f64)>, (k, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((k, s)),
            })
            .map(|(k, _)| k)
    }
}

/// Runs k-means for every `k` in `ks` and records the three heuristics.
pub fn elbow_scan_features(
    features: &Features,
    ks: &[usize],
    base: &KMeansConfig,
) -> Result<ElbowReport> {
    ensure!(!ks.is_empty(), Validation, "empty k range");
    let dist = Pairwise::distances(features);
    let corr = Pairwise::correlations(features);
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let cfg = KMeansConfig { k, ..base.clone() };
        let model = cfg.fit_features(features)?;
        rows.push(ElbowRow {
            k,
            avg_distance: mean_centroid_distance(features, &model),
            avg_correlation: mean_intra_cluster_correlation(&corr, &model.labels, k),
            silhouette: if k >= 2 {
                silhouette_score(&dist, &model.labels, k)
            } else {
                None
            },
            inertia: model.inertia,
        });
    }
    Ok(ElbowReport { rows })
}

pub fn elbow_scan(
    ds: &WeatherDataset,
    channels: &[&str],
    ks: &[usize],
    seed: u64,
) -> Result<ElbowReport> {
    let features = ds.features(channels)?;
    elbow_scan_features(&features, ks, &KMeansConfig::new(1).seed(seed))
}

/// Row-stochastic day-to-day transition probabilities between labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub k: usize,
    pub counts: Vec<Vec<usize>>,
    pub probabilities: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    /// Probability of keeping the same label on consecutive days.
    pub fn persistence(&self) -> Vec<f64> {
        (0..self.k).map(|i| self.probabilities[i][i]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("from");
        for j in 0..self.k {
            let _ = write!(out, ",to_{j}");
        }
        out.push('\n');
        for (i, row) in self.probabilities.iter().enumerate() {
            let _ = write!(out, "{i}");
            for p in row {
                let _ = write!(out, ",{p}");
            }
            out.push('\n');
        }
        out
    }
}

/// Counts label pairs on consecutive calendar days (exactly one day apart)
/// and normalises each row; rows without outgoing pairs are uniform.
pub fn transition_matrix(labels: &[usize], times: &[Timestamp], k: usize) -> Result<TransitionMatrix> {
    ensure!(
        labels.len() == times.len() && labels.len() >= 2,
        Validation,
        "need at least two labelled times, got {} labels and {} times",
        labels.len(),
        times.len()
    );
    ensure!(k >= 1, Validation, "k must be at least 1");
    ensure!(
        labels.iter().all(|&l| l < k),
        Validation,
        "label out of range for k = {k}"
    );
    let mut counts = vec![vec![0usize; k]; k];
    for t in 1..labels.len() {
        if times[t] - times[t - 1] == chrono::Duration::days(1) {
            counts[labels[t - 1]][labels[t]] += 1;
        }
    }
    let probabilities = counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            if total == 0 {
                vec![1.0 / k as f64; k]
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    Ok(TransitionMatrix {
        k,
        counts,
        probabilities,
    })
}
