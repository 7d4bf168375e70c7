//! Risk modeling toolkit for residential water lead levels.
//!
//! The crate covers the whole workflow: CSV ingestion of parcel, test,
//! service-line and hydrant records; feature encoding; six first-layer
//! classifiers plus a boosted-tree meta learner; grouped cross-validation with
//! out-of-fold stacking; ranking/probabilistic metrics; descriptive analyses
//! and GeoJSON risk-map export; and a synthetic city generator with a known
//! ground-truth risk used for verification.

pub mod analysis;
pub mod error;
pub mod features;
pub mod ingest;
pub mod learners;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use features::{Dataset, FeatureSchema};
pub use matrix::Matrix;

/// Lead concentration (ppb) above which a sample is labeled positive.
pub const ACTION_LEVEL_PPB: f64 = 15.0;
