//! Accumulation of scans over a sliding time window and resampling to a
//! fixed point count.
//!
//! All points of an accumulated cloud are expressed in the vehicle frame at
//! the time of the latest scan. `dt` is seconds relative to that scan, so the
//! latest scan sits at exactly 0 and older points are negative.

mod queue;
mod resample;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{to_vehicle_frame, transform_to_latest};
use crate::types::{find_mount, Detection, Scan, SensorMount, Vec2};

pub use queue::{push_order, PushKey, queue_equivalence_oracle, queue_push_scan, FixedQueue, StreamAccumulator};
pub use resample::{downsample, downsample_indices, upsample};

/// One point of an accumulated cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub detection: Detection,
    /// Vehicle frame at the latest scan time.
    pub position: Vec2,
    /// Seconds, `<= 0`; exactly 0 for the latest scan.
    pub dt: f64,
    pub is_replica: bool,
    pub scan_id: u64,
    pub sensor_id: u8,
    /// Index of the detection within its source scan.
    pub index: usize,
}

impl CloudPoint {
    pub fn is_latest(&self) -> bool {
        self.dt == 0.0
    }
}

/// Resampling strategy applied to an accumulated cloud.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Keep everything; the processed size follows the input.
    None,
    /// Remove uniformly among all points.
    Random,
    /// Remove in ascending RCS order.
    LowestRcs,
    /// Remove uniformly among points older than the latest scan.
    OldOnlyRandom,
    /// Stream scans through a [`FixedQueue`] of capacity `target_points`.
    FixedQueue,
    /// Random removal, with removed latest-scan points predicted from their
    /// nearest survivor at evaluation time.
    NnPostprocessBaseline,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::None,
        Strategy::Random,
        Strategy::LowestRcs,
        Strategy::OldOnlyRandom,
        Strategy::FixedQueue,
        Strategy::NnPostprocessBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Random => "random",
            Strategy::LowestRcs => "lowest-rcs",
            Strategy::OldOnlyRandom => "old-only-random",
            Strategy::FixedQueue => "fixed-queue",
            Strategy::NnPostprocessBaseline => "nn-postprocess-baseline",
        }
    }

    /// Strategies that never remove a latest-scan point.
    pub fn preserves_latest_scan(self) -> bool {
        matches!(self, Strategy::None | Strategy::OldOnlyRandom | Strategy::FixedQueue)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "old-only" => return Ok(Strategy::OldOnlyRandom),
            "queue" => return Ok(Strategy::FixedQueue),
            "nn-postprocess" => return Ok(Strategy::NnPostprocessBaseline),
            _ => {}
        }
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == norm)
            .ok_or_else(|| Error::config("strategy", format!("unknown strategy {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccumConfig {
    /// Seconds; 0 = latest scan only.
    pub window: f64,
    pub target_points: usize,
    pub strategy: Strategy,
}

impl AccumConfig {
    /// 500 ms window, 3072 points, random removal with nearest-neighbor
    /// post-processing.
    pub fn baseline() -> Self {
        AccumConfig {
            window: 0.5,
            target_points: 3072,
            strategy: Strategy::NnPostprocessBaseline,
        }
    }

    /// 300 ms window, 1280 points, fixed-size queue.
    pub fn variant_a() -> Self {
        AccumConfig {
            window: 0.3,
            target_points: 1280,
            strategy: Strategy::FixedQueue,
        }
    }

    /// Single scans padded to 330 points.
    pub fn variant_b() -> Self {
        AccumConfig {
            window: 0.0,
            target_points: 330,
            strategy: Strategy::None,
        }
    }

    /// 1.1 s window for single-sensor models.
    pub fn sensor_specific() -> Self {
        AccumConfig {
            window: 1.1,
            ..AccumConfig::variant_a()
        }
    }

    pub fn window_us(&self) -> i64 {
        (self.window * 1e6).round() as i64
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_points == 0 {
            return Err(Error::config("target_points", "must be positive"));
        }
        if !(self.window >= 0.0 && self.window.is_finite()) {
            return Err(Error::config("window", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Index range of the scans in `scans[..=latest]` that fall inside the
/// window ending at `scans[latest]`. Assumes time-ordered scans.
pub fn window_range(scans: &[Scan], latest: usize, window_us: i64) -> std::ops::Range<usize> {
    let t = scans[latest].timestamp_us;
    let start = scans[..latest].partition_point(|s| t - s.timestamp_us > window_us);
    start..latest + 1
}

fn scan_points(
    scan: &Scan,
    latest: &Scan,
    mounts: &[SensorMount],
) -> Result<impl Iterator<Item = CloudPoint>> {
    let mount = find_mount(mounts, scan.sensor_id)?;
    let dt = (scan.timestamp_us - latest.timestamp_us) as f64 * 1e-6;
    let mut out = Vec::with_capacity(scan.detections.len());
    for (index, d) in scan.detections.iter().enumerate() {
        let local = to_vehicle_frame(d.range, d.azimuth_deg, mount)?;
        let position = transform_to_latest(local, &scan.ego.pose, &latest.ego.pose)?;
        out.push(CloudPoint {
            detection: d.clone(),
            position,
            dt,
            is_replica: false,
            scan_id: scan.scan_id,
            sensor_id: scan.sensor_id,
            index,
        });
    }
    Ok(out.into_iter())
}

/// Concatenates `older` (oldest first) and `latest` in the latest vehicle
/// frame. No resampling is applied.
pub fn accumulate(older: &[Scan], latest: &Scan, mounts: &[SensorMount]) -> Result<Vec<CloudPoint>> {
    let mut cloud = Vec::new();
    for scan in older {
        if scan.timestamp_us >= latest.timestamp_us {
            return Err(Error::Ordering(format!(
                "scan {} (t = {} us) is not older than latest scan {} (t = {} us)",
                scan.scan_id, scan.timestamp_us, latest.scan_id, latest.timestamp_us
            )));
        }
        cloud.extend(scan_points(scan, latest, mounts)?);
    }
    cloud.extend(scan_points(latest, latest, mounts)?);
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Annotation, EgoState, Pose2};
    use serde_json::Map;

    pub(crate) fn scan_at(id: u64, t_us: i64, pose: Pose2, dets: Vec<Detection>) -> Scan {
        Scan {
            scan_id: id,
            sensor_id: 1,
            timestamp_us: t_us,
            ego: EgoState {
                pose,
                speed: 0.0,
                yaw_rate: 0.0,
                timestamp_us: t_us,
            },
            detections: dets,
            extra: Map::new(),
        }
    }

    fn det(r: f64) -> Detection {
        Detection::new(r, 0.0, 0.0, 0.0, 0.0).with_annotation(Annotation::Background)
    }

    fn mounts() -> Vec<SensorMount> {
        vec![SensorMount::new(1, 0.0, 0.0, 0.0)]
    }

    #[test]
    fn single_scan_has_zero_dt() {
        let s = scan_at(0, 1_000, Pose2::default(), vec![det(5.0), det(7.0)]);
        let c = accumulate(&[], &s, &mounts()).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|p| p.dt == 0.0 && !p.is_replica));
        assert_eq!(c[0].position, Vec2::new(5.0, 0.0));
    }

    #[test]
    fn stationary_ego_keeps_positions() {
        let a = scan_at(0, 0, Pose2::default(), vec![det(5.0)]);
        let b = scan_at(1, 100_000, Pose2::default(), vec![det(7.0)]);
        let c = accumulate(std::slice::from_ref(&a), &b, &mounts()).unwrap();
        assert_eq!(c[0].position, Vec2::new(5.0, 0.0));
        assert!((c[0].dt + 0.1).abs() < 1e-15);
        assert_eq!(c[1].dt, 0.0);
    }

    #[test]
    fn ego_advance_shifts_old_points_back() {
        let a = scan_at(0, 0, Pose2::default(), vec![det(5.0)]);
        let b = scan_at(1, 100_000, Pose2::new(1.0, 0.0, 0.0), vec![]);
        let c = accumulate(std::slice::from_ref(&a), &b, &mounts()).unwrap();
        assert!((c[0].position - Vec2::new(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn newer_scan_is_ordering_error() {
        let a = scan_at(0, 200, Pose2::default(), vec![]);
        let b = scan_at(1, 100, Pose2::default(), vec![]);
        let err = accumulate(std::slice::from_ref(&a), &b, &mounts()).unwrap_err();
        assert!(matches!(err, Error::Ordering(_)));
    }

    #[test]
    fn window_selects_recent_scans() {
        let scans: Vec<Scan> = (0..10)
            .map(|i| scan_at(i, i as i64 * 100_000, Pose2::default(), vec![]))
            .collect();
        assert_eq!(window_range(&scans, 9, 300_000), 6..10);
        assert_eq!(window_range(&scans, 9, 0), 9..10);
        assert_eq!(window_range(&scans, 2, 1_000_000), 0..3);
    }

    #[test]
    fn strategy_names_parse() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
        assert_eq!("old-only".parse::<Strategy>().unwrap(), Strategy::OldOnlyRandom);
        assert!("fastest".parse::<Strategy>().unwrap_err().is_config());
    }
}
