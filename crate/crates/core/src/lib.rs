//! Explainable two-stage region recommendation: cities first, then
//! neighborhoods inside a chosen city.
//!
//! The pipeline turns review logs into per-user interest labels, describes
//! every candidate region by its distances to the user's favourite and
//! least-favourite regions, scores candidates with a gradient-boosted
//! classifier and explains each score with a local linear surrogate.

pub mod error;
pub mod explain;
pub mod gbdt;
pub mod ingest;
pub mod interest;
pub mod model;
pub mod recsys;
pub mod simfeat;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use model::{
    feature_names, Dim, Dimension, DimensionKind, DimensionRegistry, EngineConfig, Level, RegionAttributes, RegionId,
    RegionRecord, RegionTable, TableSchema,
};
pub use simfeat::FeatureVector;
