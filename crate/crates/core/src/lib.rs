//! Figure-caption generation with feedback-conditioned training: synthetic and
//! benchmark-format corpora, per-metric reward models, control-token quantization,
//! a small recurrent captioner, text metrics and experiment orchestration.
//!
//! Trainable models are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision.

pub mod captioner;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod feedback;
pub mod gradcheck;
pub mod metrics;
pub mod optim;
pub mod reward;
pub mod scalar;
pub mod stats;
pub mod tensor;
pub mod udrl;

pub use error::{Error, Result};
pub use feedback::{FeedbackMetric, FeedbackScores};
pub use scalar::Scalar;

pub type RewardModelF64 = reward::RewardModel<f64>;
pub type RewardModelF32 = reward::RewardModel<f32>;
pub type CaptionerModelF64 = captioner::CaptionerModel<f64>;
pub type CaptionerModelF32 = captioner::CaptionerModel<f32>;
