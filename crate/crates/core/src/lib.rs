//! Open-vocabulary detect, track, re-detect and follow over dense per-pixel
//! descriptor fields.
//!
//! The crate is organised around the stages of the loop:
//!
//! * [`providers`] renders synthetic descriptor fields or loads precomputed ones
//! * [`detection`] matches queries against segment masks or raw pixels
//! * [`tracking`] propagates the target mask frame to frame
//! * [`redetection`] stores target descriptors and recovers lost targets
//! * [`control`] turns pixel error into velocity commands
//! * [`simulator`] closes the loop in a 2D kinematic world
//! * [`pipeline`] schedules the stages in real time and serves the console
//! * [`evaluation`] scores detections, masks and trajectories

// validation uses `!(x > 0.0)` so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod config;
pub mod control;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod providers;
pub mod redetection;
pub mod simulator;
pub mod tracking;
pub mod types;

pub use error::{FanError, Result};
pub use types::{
    cosine_similarity, cosine_similarity_raw, validate_shapes, BBox, DescriptorField, LabeledRegion, Mask, MaskRle,
    QueryDescriptor, QueryKind, SimilarityConfig,
};
