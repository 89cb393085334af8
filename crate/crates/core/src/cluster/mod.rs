//! Plane reduction by k-means over plane descriptors.

mod kmeans;
mod reduce;

pub use kmeans::{kmeans, kmeans_runs, ClusterConfig, KMeansResult, KMeansRun};
pub use reduce::{
    plane_descriptors, reduce_ccs, reduce_output, sweep_k, write_sweep_runs, write_sweep_summary, ClusterReduction, OutputClusters,
    Sweep, SweepRun, SweepSummary,
};
