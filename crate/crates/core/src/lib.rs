//! Splits an entity-resolution workload between machine and human labeling
//! so that the final labels meet precision and recall targets at a given
//! confidence, while keeping the human share small.
//!
//! The pipeline: [`ingest`] blocks two record sources into candidate pairs,
//! [`partition`] cuts them into metric-ordered subsets and samples a few,
//! [`gpr`] and [`bounds`] turn the samples into confidence bounds,
//! [`risk`] ranks machine-labeled pairs by their chance of being wrong, and
//! [`selection`] drives the loop that hands pairs to a human.

pub mod api;
pub mod bounds;
pub mod campaign;
pub mod datamodel;
pub mod error;
pub mod gpr;
pub mod ingest;
pub mod oracle;
pub mod partition;
pub mod risk;
pub mod selection;
pub mod synth;

pub use datamodel::{PairId, QualityRequirement, Side};
pub use error::{Error, Result};
pub use selection::{Engine, EngineConfig, Mode, Request, Strategy};
