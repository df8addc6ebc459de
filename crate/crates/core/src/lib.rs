//! Item-side group fairness for embedding-grounded generative recommenders.
//!
//! The crate covers the whole offline loop:
//!
//! * [`dataset`] ingests interaction logs, filters rare genres, splits them
//!   into ten temporal periods and builds capped-history sequences.
//! * [`grouping`] assigns items to popularity quintiles or genre groups.
//! * [`metrics`] computes GH/GP/GU per group, MGU, DGU, NDCG@K and HR@K.
//! * [`grounding`] maps a generated embedding to its K nearest catalog items.
//! * [`reweight`] derives per-sample loss weights from group imbalance
//!   between training histories and training targets.
//! * [`rerank`] turns validation unfairness into a per-item punishment and
//!   inflates or deflates grounding distances with it.
//! * [`simulator`] produces popularity-biased synthetic data so the two
//!   calibration strategies can be exercised end to end.
//! * [`pipeline`] wires the stages together for the simulator and the demo.

pub mod dataset;
pub mod error;
pub mod grounding;
pub mod grouping;
pub mod metrics;
pub mod pipeline;
pub mod rerank;
pub mod reweight;
pub mod simulator;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};

/// Opaque identifier for an item, user or sequence.
pub type Id = String;
