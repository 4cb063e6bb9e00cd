//! Config-driven experiment runner and sweeps.

pub mod config;
pub mod experiment;
pub mod report;
pub mod sweep;

pub use config::{DataConfig, ExperimentConfig, FusionConfig, Geometry, RoundMode, TransportMode};
pub use experiment::{
    analytic_flops, run_experiment, train_centralized, train_federated, Prepared, RoundRow, RunReport, RunSummary,
    Trained,
};
pub use report::write_run;
pub use sweep::{compare_models, compare_seed, seed_list, sweep_dataset_size, sweep_nodes, Comparison, ModelRow, Trend, TrendRow};
