//! Random vector functional link (RVFL) classifiers with closed-form ridge
//! output weights, including robust variants that down-weight noisy and
//! outlying training samples, plus the cross-validation, grid-search and
//! rank-statistics tooling used to benchmark them.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod model;
pub mod ridge;
pub mod stats;
pub mod weighting;

mod ranking;

pub use dataset::{Dataset, NormalizationParams};
pub use error::{Error, Result};
pub use model::{ModelConfig, TrainedModel, Variant};
