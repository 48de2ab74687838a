//! Per-modality k-means profiling of where each expert is reliable.

mod kmeans;
mod model;
mod profile;
mod quality;
mod reliability;

pub use kmeans::{distinct_points, kmeans_best_of, kmeans_fit, select_k, KMeansFit};
pub use model::{assign_cluster, ClusterModel, Standardizer};
pub use profile::{
    build_clustering_profile, render_quality_text, ClusterQuality, ClusteringOptions,
    ClusteringProfile, KChoice, KSelection, LOW_SEPARABILITY,
};
pub use quality::{davies_bouldin, silhouette_score};
pub use reliability::{
    cluster_reliability, rank_experts, ranking_order, render_ranking_text, ClusterReliability,
    ExpertLocal, ReliabilitySample,
};
