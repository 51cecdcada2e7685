//! Speaking-style conversion over discrete speech units.
//!
//! Utterances are frame-level unit sequences plus F0 contours. A rhythm
//! predictor re-times the deduplicated units for a target speaker and a
//! pitch predictor draws a target-speaker F0 contour; both condition on a
//! closed speaker lookup table. [`metrics`] scores conversions against
//! references and [`syncorpus`] generates corpora with known ground truth.
//!
//! Models are generic over the floating-point [`Scalar`] type; training
//! normally runs in `f32` and gradient checks in `f64`.

pub mod alignio;
pub mod durmodel;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod pitchmodel;
pub mod resample;
pub mod scalar;
pub mod syncorpus;
pub mod unitseq;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DurPredictorF32 = durmodel::DurPredictor<f32>;
pub type DurPredictorF64 = durmodel::DurPredictor<f64>;
pub type PitchPredictorF32 = pitchmodel::PitchPredictor<f32>;
pub type PitchPredictorF64 = pitchmodel::PitchPredictor<f64>;
pub type ParamsF32 = nn::Params<f32>;
pub type ParamsF64 = nn::Params<f64>;
