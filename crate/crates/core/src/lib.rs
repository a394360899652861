//! Radar clutter labeling, accumulation-aware downsampling and toy-scale
//! point-cloud segmentation.

// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accum;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod net;
pub mod relabel;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::*;
