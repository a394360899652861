//! Domain types shared by every stage of the pipeline.
//!
//! Angles are carried in degrees on every public field (sensor convention)
//! and converted to radians internally. The one exception is the ego pose
//! yaw, which lives in a world frame and is stored in radians.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Minimal 2D vector used for positions and velocities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_polar(r: f64, angle_rad: f64) -> Self {
        Vec2::new(r * angle_rad.cos(), r * angle_rad.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn rotate(self, angle_rad: f64) -> Vec2 {
        let (s, c) = angle_rad.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Mounting of one radar sensor on the vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorMount {
    /// 1..=4.
    pub sensor_id: u8,
    /// Vehicle-frame position, meters.
    pub x: f64,
    pub y: f64,
    /// Boresight direction in the vehicle frame, degrees.
    pub yaw_deg: f64,
    #[serde(default = "default_fov")]
    pub fov_half_angle_deg: f64,
    #[serde(default = "default_max_range")]
    pub max_range: f64,
}

fn default_fov() -> f64 {
    60.0
}

fn default_max_range() -> f64 {
    100.0
}

pub const MAX_SENSORS: usize = 4;

impl SensorMount {
    pub fn new(sensor_id: u8, x: f64, y: f64, yaw_deg: f64) -> Self {
        SensorMount {
            sensor_id,
            x,
            y,
            yaw_deg,
            fov_half_angle_deg: default_fov(),
            max_range: default_max_range(),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn yaw_rad(&self) -> f64 {
        self.yaw_deg.to_radians()
    }

    pub fn contains(&self, range: f64, azimuth_deg: f64) -> bool {
        (0.0..=self.max_range).contains(&range) && azimuth_deg.abs() <= self.fov_half_angle_deg
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_SENSORS as u8).contains(&self.sensor_id) {
            return Err(Error::config(
                "mounts.sensor_id",
                format!("sensor id {} not in 1..={MAX_SENSORS}", self.sensor_id),
            ));
        }
        if !(self.fov_half_angle_deg > 0.0 && self.fov_half_angle_deg <= 90.0) {
            return Err(Error::config(
                "mounts.fov_half_angle_deg",
                format!("{} not in (0, 90]", self.fov_half_angle_deg),
            ));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::config(
                "mounts.max_range",
                format!("{} must be positive", self.max_range),
            ));
        }
        Ok(())
    }
}

/// Validates a whole sensor rig: each mount valid, ids unique.
pub fn validate_mounts(mounts: &[SensorMount]) -> Result<()> {
    if mounts.is_empty() {
        return Err(Error::config("mounts", "at least one sensor mount is required"));
    }
    let mut seen = [false; MAX_SENSORS + 1];
    for m in mounts {
        m.validate()?;
        if std::mem::replace(&mut seen[m.sensor_id as usize], true) {
            return Err(Error::config(
                "mounts.sensor_id",
                format!("duplicate sensor id {}", m.sensor_id),
            ));
        }
    }
    Ok(())
}

pub fn find_mount(mounts: &[SensorMount], sensor_id: u8) -> Result<&SensorMount> {
    mounts
        .iter()
        .find(|m| m.sensor_id == sensor_id)
        .ok_or_else(|| Error::Data(format!("no mount configured for sensor {sensor_id}")))
}

/// Four-sensor rig: two corner sensors facing forward, two facing sideways.
pub fn default_rig() -> Vec<SensorMount> {
    vec![
        SensorMount::new(1, 3.6, 0.8, 85.0),
        SensorMount::new(2, 3.8, 0.6, 25.0),
        SensorMount::new(3, 3.8, -0.6, -25.0),
        SensorMount::new(4, 3.6, -0.8, -85.0),
    ]
}

/// Rigid 2D pose in a fixed world frame. `yaw` in radians.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub const fn new(x: f64, y: f64, yaw: f64) -> Self {
        Pose2 { x, y, yaw }
    }

    pub fn translation(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }

    /// Maps a point from this pose's local frame into the world frame.
    pub fn to_world(&self, p: Vec2) -> Vec2 {
        p.rotate(self.yaw) + self.translation()
    }

    /// Maps a world point into this pose's local frame.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.translation()).rotate(-self.yaw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub pose: Pose2,
    /// Forward speed, m/s.
    pub speed: f64,
    /// rad/s, counter-clockwise positive.
    pub yaw_rate: f64,
    pub timestamp_us: i64,
}

/// Class assigned to a detection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    MovingObject,
    Clutter,
    Stationary,
    #[default]
    Unlabeled,
}

pub const NUM_CLASSES: usize = 3;

impl Label {
    pub const CLASSES: [Label; NUM_CLASSES] =
        [Label::MovingObject, Label::Clutter, Label::Stationary];

    pub fn class_index(self) -> Option<usize> {
        match self {
            Label::MovingObject => Some(0),
            Label::Clutter => Some(1),
            Label::Stationary => Some(2),
            Label::Unlabeled => None,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Label> {
        Label::CLASSES.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::MovingObject => "moving_object",
            Label::Clutter => "clutter",
            Label::Stationary => "stationary",
            Label::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Generator ground truth for where a detection came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrueSource {
    RealMoving,
    RealStationary,
    MirrorGhost,
    AmbiguityGhost,
    Noise,
    #[default]
    Unknown,
}

impl TrueSource {
    pub const ALL: [TrueSource; 6] = [
        TrueSource::RealMoving,
        TrueSource::RealStationary,
        TrueSource::MirrorGhost,
        TrueSource::AmbiguityGhost,
        TrueSource::Noise,
        TrueSource::Unknown,
    ];

    pub fn is_ghost(self) -> bool {
        matches!(self, TrueSource::MirrorGhost | TrueSource::AmbiguityGhost)
    }

    pub fn name(self) -> &'static str {
        match self {
            TrueSource::RealMoving => "real_moving",
            TrueSource::RealStationary => "real_stationary",
            TrueSource::MirrorGhost => "mirror_ghost",
            TrueSource::AmbiguityGhost => "ambiguity_ghost",
            TrueSource::Noise => "noise",
            TrueSource::Unknown => "unknown",
        }
    }
}

/// Annotation as delivered by the source dataset: an object class tag, or
/// background. Serialized as a plain string; `"background"` is reserved.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Annotation {
    Background,
    Object(String),
}

pub const BACKGROUND_TAG: &str = "background";

impl Annotation {
    pub fn is_object(&self) -> bool {
        matches!(self, Annotation::Object(_))
    }
}

impl Serialize for Annotation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Annotation::Background => s.serialize_str(BACKGROUND_TAG),
            Annotation::Object(tag) => s.serialize_str(tag),
        }
    }
}

impl<'de> Deserialize<'de> for Annotation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tag = String::deserialize(d)?;
        if tag == BACKGROUND_TAG {
            Ok(Annotation::Background)
        } else if tag.is_empty() {
            Err(serde::de::Error::custom("empty annotation tag"))
        } else {
            Ok(Annotation::Object(tag))
        }
    }
}

/// One radar return.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Meters.
    pub range: f64,
    /// Degrees in the sensor frame.
    pub azimuth_deg: f64,
    /// Radial velocity relative to the sensor, m/s; positive = receding.
    pub v_rel: f64,
    /// Ego-motion-compensated radial velocity, m/s.
    pub v_comp: f64,
    /// dBsm.
    pub rcs: f64,
    /// `None` when the source carried no annotation at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_annotation: Option<Annotation>,
    #[serde(default)]
    pub label: Label,
    #[serde(default)]
    pub true_source: TrueSource,
    /// Network output, when a prediction pass has been written back.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<Label>,
    /// Fields this version does not know about, preserved on rewrite.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Detection {
    pub fn new(range: f64, azimuth_deg: f64, v_rel: f64, v_comp: f64, rcs: f64) -> Self {
        Detection {
            range,
            azimuth_deg,
            v_rel,
            v_comp,
            rcs,
            original_annotation: None,
            label: Label::Unlabeled,
            true_source: TrueSource::Unknown,
            prediction: None,
            extra: Map::new(),
        }
    }

    pub fn with_annotation(mut self, annotation: Annotation) -> Self {
        self.original_annotation = Some(annotation);
        self
    }

    pub fn with_source(mut self, source: TrueSource) -> Self {
        self.true_source = source;
        self
    }
}

/// One sensor's output at one timestamp, plus the ego state at that time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub scan_id: u64,
    pub sensor_id: u8,
    pub timestamp_us: i64,
    pub ego: EgoState,
    pub detections: Vec<Detection>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Scan {
    /// Checks every detection against the mount's FOV and range bounds.
    pub fn validate(&self, mount: &SensorMount) -> Result<()> {
        for (i, d) in self.detections.iter().enumerate() {
            if !mount.contains(d.range, d.azimuth_deg) {
                return Err(Error::Data(format!(
                    "scan {}: detection {i} (range {}, azimuth {}) outside sensor {} bounds",
                    self.scan_id, d.range, d.azimuth_deg, mount.sensor_id
                )));
            }
        }
        Ok(())
    }
}

/// A recording: the sensor rig plus scans in strictly increasing time order.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub mounts: Vec<SensorMount>,
    pub scans: Vec<Scan>,
}

impl Recording {
    pub fn detection_count(&self) -> usize {
        self.scans.iter().map(|s| s.detections.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        validate_mounts(&self.mounts)?;
        for pair in self.scans.windows(2) {
            if pair[1].timestamp_us <= pair[0].timestamp_us {
                return Err(Error::Ordering(format!(
                    "scan {} (t = {} us) does not follow scan {} (t = {} us)",
                    pair[1].scan_id, pair[1].timestamp_us, pair[0].scan_id, pair[0].timestamp_us
                )));
            }
        }
        for scan in &self.scans {
            scan.validate(find_mount(&self.mounts, scan.sensor_id)?)?;
        }
        Ok(())
    }
}

/// Conversion point for foreign datasets: one foreign record becomes one scan.
///
/// A converter for another recording format (for example an HDF5-based
/// dataset) implements this trait; everything downstream only sees [`Scan`]s.
pub trait ScanAdapter {
    type Record;

    fn to_scan(&self, record: Self::Record) -> Result<Scan>;
}
