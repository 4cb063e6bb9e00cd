//! Synthetic threat data, client partitioning and detection metrics.

pub mod io;
pub mod metrics;
pub mod partition;
pub mod synth;

pub use io::{export_dataset, import_dataset, DatasetHeader};
pub use metrics::{confusion, evaluate, metrics, predict, ConfusionCounts, DetectionMetrics, Timings};
pub use partition::partition;
pub use synth::{
    aligned_means, bayes_accuracy, bayes_accuracy_for_distance, distance_for_accuracy, generate,
    make_complementary, Dataset, SyntheticSpec, UNIMODAL_TARGET,
};
