//! Parameter-group-weighted gradient data attribution.
//!
//! Per-example gradients of a small classifier are split into named parameter
//! groups, randomly projected, and scored against a query with TracIn (plain
//! dot products) or TRAK (a ridge-regularized inverse Gram kernel). A
//! non-negative weight per group, learned from unlabeled queries by pushing
//! the top-k scores up relative to the score norm, rescales the query side of
//! each score. The [`eval`] module measures the result with the linear
//! datamodeling score, mislabel detection, tail-patch and Recall@k; the
//! [`oracle`] module gives a signal-plus-noise model whose optimal weights are
//! known in closed form.
//!
//! Numerical types are generic over [`Scalar`] with `f64` as the default; the
//! aliases below fix the element type for callers that do not care.

pub mod attribution;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod weighting;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Kernel = attribution::Kernel<f64>;
pub type AttributionResult = attribution::AttributionResult<f64>;
pub type TrainingSide = attribution::TrainingSide<f64>;
pub type GroupContributionMatrix = attribution::GroupContributionMatrix<f64>;
pub type Projector = features::Projector<f64>;
pub type GradientFeatureStore = features::GradientFeatureStore<f64>;
pub type ModelCheckpoint = model::ModelCheckpoint<f64>;
pub type WeightVector = weighting::WeightVector<f64>;
pub type RawWeights = weighting::RawWeights<f64>;
pub type AdamW = weighting::AdamW<f64>;
pub type LearnOutcome = weighting::LearnOutcome<f64>;
pub type SweepOutcome = weighting::SweepOutcome<f64>;
