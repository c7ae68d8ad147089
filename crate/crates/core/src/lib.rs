//! Joint analysis of groups of replicated experiments: per-replication tests,
//! aggregated-data meta-analysis, IPD mixed models, p-value pooling, moderators,
//! Monte-Carlo bias demonstrations and SVG figures.

pub mod data;
pub mod descriptives;
pub mod effect_size;
pub mod error;
pub mod individual;
pub mod lmm;
pub mod meta;
pub mod numerics;
pub mod plots;
pub mod pvalue;
pub mod simulation;

pub use error::{Error, Result};
