//! Coordinate transforms and ego-motion velocity compensation.
//!
//! Vehicle frame: x forward, y left, yaw counter-clockwise. Sensor frame:
//! polar coordinates around the mount position, azimuth measured from the
//! boresight.

use crate::error::{Error, Result};
use crate::types::{EgoState, Pose2, SensorMount, Vec2};

/// Polar sensor measurement to vehicle-frame Cartesian position.
pub fn to_vehicle_frame(range: f64, azimuth_deg: f64, mount: &SensorMount) -> Result<Vec2> {
    if !range.is_finite() || range < 0.0 || range > mount.max_range {
        return Err(Error::Domain {
            field: "range",
            value: range,
            reason: format!("expected 0 <= range <= {}", mount.max_range),
        });
    }
    if !azimuth_deg.is_finite() || azimuth_deg.abs() > mount.fov_half_angle_deg {
        return Err(Error::Domain {
            field: "azimuth",
            value: azimuth_deg,
            reason: format!("expected |azimuth| <= {} deg", mount.fov_half_angle_deg),
        });
    }
    Ok(mount.position() + Vec2::from_polar(range, mount.yaw_rad() + azimuth_deg.to_radians()))
}

/// Inverse of [`to_vehicle_frame`]: `(range, azimuth_deg)`; no bounds check.
pub fn to_sensor_frame(p: Vec2, mount: &SensorMount) -> (f64, f64) {
    let rel = (p - mount.position()).rotate(-mount.yaw_rad());
    (rel.norm(), rel.y.atan2(rel.x).to_degrees())
}

/// Velocity of the sensor over ground, expressed in vehicle axes.
pub fn sensor_velocity(ego: &EgoState, mount: &SensorMount) -> Vec2 {
    // v_ego + omega x r_mount
    Vec2::new(ego.speed - ego.yaw_rate * mount.y, ego.yaw_rate * mount.x)
}

/// Unit vector from the sensor to a vehicle-frame point.
pub fn line_of_sight(p: Vec2, mount: &SensorMount) -> Result<Vec2> {
    let d = p - mount.position();
    let n = d.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Domain {
            field: "line_of_sight",
            value: n,
            reason: "detection coincides with the sensor position".into(),
        });
    }
    Ok(d.scale(1.0 / n))
}

/// Removes the sensor's own motion from a measured radial velocity.
///
/// `v_comp = v_rel + v_sensor . u_los`; a stationary target gives 0.
pub fn compensate_velocity(
    v_rel: f64,
    det_position: Vec2,
    ego: &EgoState,
    mount: &SensorMount,
) -> Result<f64> {
    let u = line_of_sight(det_position, mount)?;
    Ok(v_rel + sensor_velocity(ego, mount).dot(u))
}

/// Re-expresses a vehicle-frame position recorded at pose `old` in the
/// vehicle frame at pose `new`.
pub fn transform_to_latest(p: Vec2, old: &Pose2, new: &Pose2) -> Result<Vec2> {
    if !p.is_finite() || !old.is_finite() || !new.is_finite() {
        return Err(Error::Domain {
            field: "pose",
            value: f64::NAN,
            reason: "non-finite position or pose".into(),
        });
    }
    if old == new {
        return Ok(p);
    }
    Ok(new.to_local(old.to_world(p)))
}
