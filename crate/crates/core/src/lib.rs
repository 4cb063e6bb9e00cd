//! Privacy-preserving federated multimodal threat detection.
//!
//! A logistic linear scorer is trained over fused multimodal features by a
//! set of clients, each holding a label-skewed shard. Clients train locally
//! and send parameter deltas, optionally clipped, noised and sparsified; the
//! server aggregates them synchronously or applies them as they arrive with
//! a staleness discount.

pub mod error;
pub mod evalgen;
pub mod federation;
pub mod fusion;
pub mod params;
pub mod privacy;
pub mod rng;
pub mod runner;

pub use error::*;
pub use params::{LabeledBatch, LrSchedule, ParamVector};
