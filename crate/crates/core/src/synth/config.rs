use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{default_rig, validate_mounts, SensorMount, Vec2};

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

impl CountRange {
    pub const fn new(min: usize, max: usize) -> Self {
        CountRange { min, max }
    }

    pub const fn exactly(n: usize) -> Self {
        CountRange { min: n, max: n }
    }

    fn validate(&self, path: &str) -> Result<()> {
        if self.min > self.max {
            return Err(Error::config(path, format!("min {} > max {}", self.min, self.max)));
        }
        Ok(())
    }
}

/// Half-open float range `[min, max)`; `min == max` means the constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanRange {
    pub min: f64,
    pub max: f64,
}

impl SpanRange {
    pub const fn new(min: f64, max: f64) -> Self {
        SpanRange { min, max }
    }

    fn validate(&self, path: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::config(path, format!("invalid range [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }
}

/// Piece of the ego trajectory with constant speed and yaw rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSegment {
    /// Seconds.
    pub duration: f64,
    pub speed: f64,
    #[serde(default)]
    pub yaw_rate: f64,
}

/// A rigid object moving with constant world velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    /// Annotation class tag, e.g. `car`.
    pub class: String,
    /// World position of the box center at t = 0.
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub length: f64,
    pub width: f64,
    /// Heading used when the object does not move; degrees.
    #[serde(default)]
    pub heading_deg: f64,
    pub detections: CountRange,
    /// Probability that a scatterer also produces a return protruding past
    /// the annotated box (mirrors, wheels), which the source annotation
    /// leaves as background.
    #[serde(default)]
    pub spill_prob: f64,
}

impl ObjectSpec {
    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    pub fn heading_rad(&self) -> f64 {
        if self.vx != 0.0 || self.vy != 0.0 {
            self.vy.atan2(self.vx)
        } else {
            self.heading_deg.to_radians()
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        if self.class.is_empty() || self.class == crate::types::BACKGROUND_TAG {
            return Err(Error::config(format!("{path}.class"), "must be a non-background tag"));
        }
        for (name, v) in [("x", self.x), ("y", self.y), ("vx", self.vx), ("vy", self.vy)] {
            if !v.is_finite() {
                return Err(Error::config(format!("{path}.{name}"), "must be finite"));
            }
        }
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(Error::config(format!("{path}.length"), "extent must be positive"));
        }
        if !(0.0..=1.0).contains(&self.spill_prob) {
            return Err(Error::config(format!("{path}.spill_prob"), "must be in [0, 1]"));
        }
        self.detections.validate(&format!("{path}.detections"))
    }
}

/// Randomly spawned traffic, drawn from the scenario seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub count: CountRange,
    pub classes: Vec<String>,
    /// Spawn region in the world frame.
    pub x: SpanRange,
    pub y: SpanRange,
    /// Speed over ground, m/s.
    pub speed: SpanRange,
    /// Probability that an object crosses (random heading) instead of
    /// following or opposing the x axis.
    #[serde(default)]
    pub crossing_prob: f64,
    pub detections: CountRange,
    #[serde(default)]
    pub spill_prob: f64,
}

/// Specular reflector, a world-frame line segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reflector {
    pub a: Vec2,
    pub b: Vec2,
    /// Probability a ghost is emitted per object per scan.
    pub reflectivity: f64,
    /// Stationary returns from the surface itself, per scan.
    #[serde(default)]
    pub returns_per_scan: usize,
}

impl Reflector {
    pub fn new(a: Vec2, b: Vec2, reflectivity: f64) -> Self {
        Reflector {
            a,
            b,
            reflectivity,
            returns_per_scan: 0,
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) || (self.b - self.a).norm() == 0.0 {
            return Err(Error::config(path, "degenerate or non-finite segment"));
        }
        if !(0.0..=1.0).contains(&self.reflectivity) {
            return Err(Error::config(format!("{path}.reflectivity"), "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Measurement noise. Azimuth noise grows linearly with the view angle, from
/// `sigma_azimuth_deg` at boresight to twice that at 60 degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub sigma_range: f64,
    pub sigma_azimuth_deg: f64,
    pub sigma_v: f64,
    /// Uniform ego-compensation error in `[-bound, bound]`, m/s.
    pub comp_error_bound: f64,
    /// Clip Gaussian noise at this many sigmas (resampling); `None` = unbounded.
    pub clip_sigmas: Option<f64>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma_range: 0.03,
            sigma_azimuth_deg: 0.25,
            sigma_v: 0.1,
            comp_error_bound: 0.2,
            clip_sigmas: None,
        }
    }
}

impl NoiseModel {
    pub fn noise_free() -> Self {
        NoiseModel {
            sigma_range: 0.0,
            sigma_azimuth_deg: 0.0,
            sigma_v: 0.0,
            comp_error_bound: 0.0,
            clip_sigmas: None,
        }
    }

    pub fn azimuth_sigma_at(&self, view_angle_deg: f64) -> f64 {
        self.sigma_azimuth_deg * (1.0 + view_angle_deg.abs() / 60.0)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("noise.sigma_range", self.sigma_range),
            ("noise.sigma_azimuth_deg", self.sigma_azimuth_deg),
            ("noise.sigma_v", self.sigma_v),
            ("noise.comp_error_bound", self.comp_error_bound),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("{v} must be finite and >= 0")));
            }
        }
        if let Some(c) = self.clip_sigmas {
            if !(c > 0.0) {
                return Err(Error::config("noise.clip_sigmas", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClutterRates {
    /// Randomly placed noise detections per scan.
    pub noise_per_scan: CountRange,
    /// |v_comp| of noise detections, m/s; sign drawn uniformly.
    pub noise_speed: SpanRange,
    /// Per real detection probability of a velocity-alias ghost.
    pub velocity_alias_prob: f64,
    /// Unambiguous velocity span, m/s.
    pub velocity_span: f64,
    /// Per real detection probability of an angle-alias ghost.
    pub angle_alias_prob: f64,
    /// Magnitude of the azimuth alias offset, degrees; sign drawn uniformly.
    pub angle_alias_offset_deg: f64,
}

impl Default for ClutterRates {
    fn default() -> Self {
        ClutterRates {
            noise_per_scan: CountRange::new(0, 4),
            noise_speed: SpanRange::new(0.0, 15.0),
            velocity_alias_prob: 0.01,
            velocity_span: 25.0,
            angle_alias_prob: 0.01,
            angle_alias_offset_deg: 20.0,
        }
    }
}

impl ClutterRates {
    pub fn none() -> Self {
        ClutterRates {
            noise_per_scan: CountRange::exactly(0),
            velocity_alias_prob: 0.0,
            angle_alias_prob: 0.0,
            ..ClutterRates::default()
        }
    }

    fn validate(&self) -> Result<()> {
        self.noise_per_scan.validate("clutter.noise_per_scan")?;
        self.noise_speed.validate("clutter.noise_speed")?;
        if self.noise_speed.min < 0.0 {
            return Err(Error::config("clutter.noise_speed", "speeds must be >= 0"));
        }
        for (name, p) in [
            ("clutter.velocity_alias_prob", self.velocity_alias_prob),
            ("clutter.angle_alias_prob", self.angle_alias_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(name, format!("{p} must be a probability")));
            }
        }
        if !(self.velocity_span > 0.0) {
            return Err(Error::config("clutter.velocity_span", "must be positive"));
        }
        Ok(())
    }
}

/// Static background returns, uniform over each sensor's field of view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationarySpec {
    pub per_scan: CountRange,
    pub min_range: f64,
}

impl Default for StationarySpec {
    fn default() -> Self {
        StationarySpec {
            per_scan: CountRange::new(60, 200),
            min_range: 1.0,
        }
    }
}

/// Gaussian RCS per source type, dBsm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcsSpec {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RcsModel {
    pub moving: RcsSpec,
    pub stationary: RcsSpec,
    pub mirror_ghost: RcsSpec,
    pub ambiguity_ghost: RcsSpec,
    pub noise: RcsSpec,
}

impl Default for RcsModel {
    fn default() -> Self {
        RcsModel {
            moving: RcsSpec { mean: 5.0, std: 6.0 },
            stationary: RcsSpec { mean: 0.0, std: 8.0 },
            mirror_ghost: RcsSpec { mean: -8.0, std: 5.0 },
            ambiguity_ghost: RcsSpec { mean: -5.0, std: 6.0 },
            noise: RcsSpec { mean: -15.0, std: 5.0 },
        }
    }
}

/// Suppresses clutter whose noise-free polar position falls inside the
/// resolution cell of a real moving detection of the same scan; the two
/// returns would merge into one in the sensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeGuard {
    pub range: f64,
    pub azimuth_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Seconds.
    pub duration: f64,
    /// Seconds between two scans of the same sensor.
    pub scan_interval: f64,
    #[serde(default = "default_rig")]
    pub mounts: Vec<SensorMount>,
    /// Ego trajectory; after the last segment its motion continues.
    #[serde(default)]
    pub ego: Vec<EgoSegment>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub traffic: Option<TrafficSpec>,
    #[serde(default)]
    pub reflectors: Vec<Reflector>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub clutter: ClutterRates,
    #[serde(default)]
    pub stationary: StationarySpec,
    #[serde(default)]
    pub rcs: RcsModel,
    #[serde(default = "default_detection_bounds")]
    pub detections_per_scan: CountRange,
    #[serde(default)]
    pub merge_guard: Option<MergeGuard>,
    #[serde(default)]
    pub seed: u64,
}

fn default_detection_bounds() -> CountRange {
    CountRange::new(20, 330)
}

impl ScenarioConfig {
    /// A bare scenario: default rig, stationary ego, nothing in the scene.
    pub fn empty(duration: f64, scan_interval: f64, seed: u64) -> Self {
        ScenarioConfig {
            duration,
            scan_interval,
            mounts: default_rig(),
            ego: Vec::new(),
            objects: Vec::new(),
            traffic: None,
            reflectors: Vec::new(),
            noise: NoiseModel::default(),
            clutter: ClutterRates::none(),
            stationary: StationarySpec {
                per_scan: CountRange::exactly(0),
                min_range: 1.0,
            },
            rcs: RcsModel::default(),
            detections_per_scan: CountRange::new(0, 1_000_000),
            merge_guard: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::config("duration", format!("{} must be positive", self.duration)));
        }
        if !(self.scan_interval > 0.0 && self.scan_interval.is_finite()) {
            return Err(Error::config("scan_interval", "must be positive"));
        }
        if (self.scan_interval * 1e6).round() < self.mounts.len() as f64 {
            return Err(Error::config("scan_interval", "too short to stagger sensors"));
        }
        validate_mounts(&self.mounts)?;
        for (i, seg) in self.ego.iter().enumerate() {
            if !(seg.duration > 0.0 && seg.speed.is_finite() && seg.yaw_rate.is_finite()) {
                return Err(Error::config(format!("ego[{i}]"), "invalid segment"));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            o.validate(&format!("objects[{i}]"))?;
        }
        if let Some(t) = &self.traffic {
            t.count.validate("traffic.count")?;
            t.detections.validate("traffic.detections")?;
            t.x.validate("traffic.x")?;
            t.y.validate("traffic.y")?;
            t.speed.validate("traffic.speed")?;
            if t.classes.is_empty() && t.count.max > 0 {
                return Err(Error::config("traffic.classes", "at least one class required"));
            }
            if !(0.0..=1.0).contains(&t.crossing_prob) || !(0.0..=1.0).contains(&t.spill_prob) {
                return Err(Error::config("traffic", "probabilities must be in [0, 1]"));
            }
        }
        for (i, r) in self.reflectors.iter().enumerate() {
            r.validate(&format!("reflectors[{i}]"))?;
        }
        self.noise.validate()?;
        self.clutter.validate()?;
        self.stationary.per_scan.validate("stationary.per_scan")?;
        self.detections_per_scan.validate("detections_per_scan")?;
        for (name, s) in [
            ("rcs.moving", self.rcs.moving),
            ("rcs.stationary", self.rcs.stationary),
            ("rcs.mirror_ghost", self.rcs.mirror_ghost),
            ("rcs.ambiguity_ghost", self.rcs.ambiguity_ghost),
            ("rcs.noise", self.rcs.noise),
        ] {
            if !(s.mean.is_finite() && s.std >= 0.0) {
                return Err(Error::config(name, "mean must be finite and std >= 0"));
            }
        }
        if let Some(g) = self.merge_guard {
            if !(g.range >= 0.0 && g.azimuth_deg >= 0.0) {
                return Err(Error::config("merge_guard", "bounds must be >= 0"));
            }
        }
        Ok(())
    }
}
