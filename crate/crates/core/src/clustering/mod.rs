//! Weather-pattern discovery: k-means on vectorised daily fields, the
//! representative datapoint of each cluster, and cluster diagnostics.

mod diagnostics;
mod kmeans;

pub use diagnostics::{
    elbow_scan, elbow_scan_features, mean_centroid_distance, mean_intra_cluster_correlation,
    silhouette_score, transition_matrix, ElbowReport, ElbowRow, Pairwise, TransitionMatrix,
};
pub use kmeans::{
    kmeans_fit, lloyd, nearest_datapoint, representatives, ClusterModel, KMeansConfig, LloydRun,
    INERTIA_SLACK,
};
