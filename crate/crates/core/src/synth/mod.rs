//! Synthetic labeled radar recordings with known ground-truth causes.
//!
//! The generator places moving objects, static background and reflecting
//! surfaces around an ego vehicle and emits per-sensor scans. Every detection
//! carries a [`TrueSource`](crate::types::TrueSource) so the output doubles as
//! an oracle for the label generator.

mod config;
mod generate;
mod ghosts;
mod presets;

pub use config::{
    ClutterRates, CountRange, EgoSegment, MergeGuard, NoiseModel, ObjectSpec, RcsModel, RcsSpec,
    Reflector, ScenarioConfig, SpanRange, StationarySpec, TrafficSpec,
};
pub use generate::{generate_recording, generate_recording_with_truth, DetectionTruth, Generated};
pub use ghosts::{ambiguity_ghost, mirror_ghost, AliasMode};
pub use presets::{preset, PRESET_NAMES};
