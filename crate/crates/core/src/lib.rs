//! RGB + thermal single-object tracking with decision, feature and pixel
//! level fusion over a small frozen Siamese tracker, plus a synthetic data
//! generator and benchmark metrics.
//!
//! Every numeric module is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common instantiations.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod decision;
pub mod error;
pub mod evaluation;
pub mod feature_fusion;
pub mod geometry;
pub mod pixel;
pub mod report;
pub mod scalar;
pub mod siamese;
pub mod sim;
pub mod tensor;
pub mod tracker;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BBox32 = geometry::BBox<f32>;
pub type BBox64 = geometry::BBox<f64>;
pub type FeatureMap32 = tensor::FeatureMap<f32>;
pub type FeatureMap64 = tensor::FeatureMap<f64>;
pub type Tracker32 = tracker::Tracker<f32>;
pub type Tracker64 = tracker::Tracker<f64>;
pub type TrackerConfig32 = tracker::TrackerConfig<f32>;
pub type TrackerConfig64 = tracker::TrackerConfig<f64>;
