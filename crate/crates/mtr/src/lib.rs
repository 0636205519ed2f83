//! Multi-target regression via random linear combinations of targets.
//!
//! The pipeline: load a dataset with several numeric targets, normalize the
//! targets to [0, 1], draw a set of random sparse linear combinations of
//! them, fit one gradient-boosted tree ensemble per combination, and decode
//! predictions back to the original target space with least squares. A
//! single-target baseline, evaluation protocols (holdout and cross-validation
//! with aRRMSE), target-correlation analysis, and the statistical machinery
//! for comparing methods across datasets round out the toolkit.

pub mod coding;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gbtree;
pub mod linalg;
pub mod rlc;
pub mod stats;
pub mod util;

pub use error::{Error, Result};
