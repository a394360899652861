//! Point-cloud segmentation networks with hand-written reverse mode.
//!
//! Both variants share one encoder/decoder: three set-abstraction levels
//! with multi-scale grouping, three feature-propagation levels and a
//! per-point head. Variant B runs a per-point preprocessing MLP first.

mod checkpoint;
mod config;
mod gradcheck;
mod loss;
mod model;
mod params;
mod sampling;
mod schedule;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{NetworkConfig, SaLevel, Variant};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use loss::{class_weights, focal_loss, focal_terms, FocalTerms};
pub use model::{Model, Tape, INFERENCE_SEED};
pub use params::{Dense, Layout, ParamEntry};
pub use sampling::{
    ball_query, build_plan, canonical_rank, farthest_point_sample, interpolation_weights, BallGroups, FpsStart,
    Interpolation, LevelPlan, SamplingPlan,
};
pub use schedule::{cyclical_lr, Adam};
pub use train::{resume, train, EpochLog, TrainConfig, TrainOutcome};
