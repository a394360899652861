//! Geometric clutter models: specular multipath ghosts and ambiguity ghosts.

use crate::geometry::{line_of_sight, sensor_velocity, to_sensor_frame, to_vehicle_frame};
use crate::synth::Reflector;
use crate::types::{Annotation, Detection, EgoState, SensorMount, TrueSource, Vec2};

/// Mirror image of `p` across the infinite line through `a` and `b`.
pub(crate) fn reflect_point(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let d = b - a;
    let foot = a + d.scale((p - a).dot(d) / d.norm_sq());
    foot.scale(2.0) - p
}

/// Mirror image of a direction vector across a line with direction `d`.
pub(crate) fn reflect_vector(v: Vec2, d: Vec2) -> Vec2 {
    d.scale(2.0 * v.dot(d) / d.norm_sq()) - v
}

/// Closed-segment intersection test for `p0-p1` against `q0-q1`.
pub(crate) fn segments_intersect(p0: Vec2, p1: Vec2, q0: Vec2, q1: Vec2) -> bool {
    let r = p1 - p0;
    let s = q1 - q0;
    let denom = r.cross(s);
    if denom == 0.0 {
        return false;
    }
    let t = (q0 - p0).cross(s) / denom;
    let u = (q0 - p0).cross(r) / denom;
    (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)
}

/// Multipath ghost of a target seen via a specular reflector.
///
/// All inputs are in the vehicle frame at scan time; `target_vel` is the
/// target's velocity over ground. The ghost sits at the target mirrored
/// across the reflector line and moves with the mirrored velocity. It is
/// only emitted when the sensor-to-ghost ray passes through the finite
/// reflector segment and the ghost lies inside the sensor's field of view.
pub fn mirror_ghost(
    target_pos: Vec2,
    target_vel: Vec2,
    reflector: &Reflector,
    mount: &SensorMount,
    ego: &EgoState,
) -> Option<Detection> {
    let (a, b) = (reflector.a, reflector.b);
    let d = b - a;
    let sensor = mount.position();
    let side_target = d.cross(target_pos - a);
    let side_sensor = d.cross(sensor - a);
    if side_target * side_sensor <= 0.0 {
        return None;
    }
    let ghost = reflect_point(target_pos, a, b);
    if !segments_intersect(sensor, ghost, a, b) {
        return None;
    }
    let (range, azimuth_deg) = to_sensor_frame(ghost, mount);
    if !mount.contains(range, azimuth_deg) {
        return None;
    }
    let u = line_of_sight(ghost, mount).ok()?;
    let v_comp = reflect_vector(target_vel, d).dot(u);
    let v_rel = v_comp - sensor_velocity(ego, mount).dot(u);
    Some(
        Detection::new(range, azimuth_deg, v_rel, v_comp, 0.0)
            .with_annotation(Annotation::Background)
            .with_source(TrueSource::MirrorGhost),
    )
}

/// How an ambiguity is resolved wrongly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AliasMode {
    /// Radial velocity folded by `fold` whole spans (`fold` != 0 in practice).
    Velocity { span: f64, fold: i32 },
    /// Azimuth shifted by a fixed offset.
    AngleOffset { offset_deg: f64 },
    /// Azimuth mirrored about the boresight.
    AngleMirror,
}

/// Ambiguity ghost derived from a real detection, or `None` if the aliased
/// return falls outside the sensor's field of view.
pub fn ambiguity_ghost(
    det: &Detection,
    mode: AliasMode,
    mount: &SensorMount,
    ego: &EgoState,
) -> Option<Detection> {
    if !mount.contains(det.range, det.azimuth_deg) {
        return None;
    }
    let mut ghost = det.clone();
    ghost.original_annotation = Some(Annotation::Background);
    ghost.true_source = TrueSource::AmbiguityGhost;
    ghost.label = Default::default();
    ghost.prediction = None;
    match mode {
        AliasMode::Velocity { span, fold } => {
            let shift = f64::from(fold) * span;
            ghost.v_rel += shift;
            ghost.v_comp += shift;
        }
        AliasMode::AngleOffset { .. } | AliasMode::AngleMirror => {
            let azimuth = match mode {
                AliasMode::AngleOffset { offset_deg } => det.azimuth_deg + offset_deg,
                _ => -det.azimuth_deg,
            };
            if !mount.contains(det.range, azimuth) {
                return None;
            }
            // Same measured v_rel, compensated along the wrong line of sight.
            let old = to_vehicle_frame(det.range, det.azimuth_deg, mount).ok()?;
            let new = to_vehicle_frame(det.range, azimuth, mount).ok()?;
            let vs = sensor_velocity(ego, mount);
            let du = line_of_sight(new, mount).ok()? - line_of_sight(old, mount).ok()?;
            ghost.azimuth_deg = azimuth;
            ghost.v_comp += vs.dot(du);
        }
    }
    Some(ghost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Pose2;

    fn ego(speed: f64) -> EgoState {
        EgoState {
            pose: Pose2::default(),
            speed,
            yaw_rate: 0.0,
            timestamp_us: 0,
        }
    }

    fn wall() -> Reflector {
        Reflector::new(Vec2::new(-100.0, 5.0), Vec2::new(100.0, 5.0), 1.0)
    }

    #[test]
    fn ghost_mirrors_across_horizontal_line() {
        let m = SensorMount::new(1, 0.0, 0.0, 0.0);
        let g = mirror_ghost(Vec2::new(20.0, 2.0), Vec2::ZERO, &wall(), &m, &ego(0.0)).unwrap();
        let expected = Vec2::new(20.0, 8.0);
        assert!((g.range - expected.norm()).abs() < 1e-12);
        assert!((g.azimuth_deg - 8f64.atan2(20.0).to_degrees()).abs() < 1e-12);
        assert_eq!(g.true_source, TrueSource::MirrorGhost);
    }

    #[test]
    fn parallel_velocity_is_preserved_and_projected() {
        let m = SensorMount::new(1, 0.0, 0.0, 0.0);
        let g = mirror_ghost(
            Vec2::new(20.0, 2.0),
            Vec2::new(10.0, 0.0),
            &wall(),
            &m,
            &ego(0.0),
        )
        .unwrap();
        // (10, 0) . (20, 8) / |(20, 8)|
        let expected = 10.0 * 20.0 / (20f64 * 20.0 + 64.0).sqrt();
        assert!((g.v_comp - expected).abs() < 1e-12);
        assert!((g.v_rel - expected).abs() < 1e-12);
    }

    #[test]
    fn ray_missing_segment_gives_none() {
        let m = SensorMount::new(1, 0.0, 0.0, 0.0);
        let short = Reflector::new(Vec2::new(0.0, 5.0), Vec2::new(5.0, 5.0), 1.0);
        assert!(mirror_ghost(Vec2::new(20.0, 2.0), Vec2::ZERO, &short, &m, &ego(0.0)).is_none());
    }

    #[test]
    fn opposite_sides_give_none() {
        let m = SensorMount::new(1, 0.0, 0.0, 0.0);
        assert!(mirror_ghost(Vec2::new(20.0, 7.0), Vec2::ZERO, &wall(), &m, &ego(0.0)).is_none());
    }

    #[test]
    fn velocity_alias_folds_by_span() {
        let m = SensorMount::new(1, 0.0, 0.0, 0.0);
        let d = Detection::new(30.0, 10.0, 5.0, 5.0, 0.0);
        let down = ambiguity_ghost(&d, AliasMode::Velocity { span: 25.0, fold: -1 }, &m, &ego(0.0));
        let up = ambiguity_ghost(&d, AliasMode::Velocity { span: 25.0, fold: 1 }, &m, &ego(0.0));
        assert_eq!(down.unwrap().v_rel, -20.0);
        assert_eq!(up.unwrap().v_rel, 30.0);
    }

    #[test]
    fn angle_alias_edge_cases() {
        let m = SensorMount::new(1, 0.0, 0.0, 0.0);
        let d = Detection::new(30.0, 35.0, -3.0, 0.0, 0.0);
        let same = ambiguity_ghost(&d, AliasMode::AngleOffset { offset_deg: 0.0 }, &m, &ego(8.0));
        let same = same.unwrap();
        assert_eq!(same.azimuth_deg, 35.0);
        assert_eq!(same.v_comp, 0.0);
        assert_eq!(same.true_source, TrueSource::AmbiguityGhost);
        // 35 + 40 = 75 deg, beyond the 60 deg field of view.
        assert!(ambiguity_ghost(&d, AliasMode::AngleOffset { offset_deg: 40.0 }, &m, &ego(8.0))
            .is_none());
    }

    #[test]
    fn angle_alias_of_static_target_moves_v_comp() {
        let m = SensorMount::new(1, 0.0, 0.0, 0.0);
        let az = 20f64;
        let d = Detection::new(30.0, az, -10.0 * az.to_radians().cos(), 0.0, 0.0);
        let g = ambiguity_ghost(&d, AliasMode::AngleMirror, &m, &ego(10.0)).unwrap();
        // LOS components along x are equal for +/- az, y flips sign: vs = (10, 0).
        assert!(g.v_comp.abs() < 1e-12);
        let g = ambiguity_ghost(&d, AliasMode::AngleOffset { offset_deg: 30.0 }, &m, &ego(10.0))
            .unwrap();
        let expected = 10.0 * (50f64.to_radians().cos() - 20f64.to_radians().cos());
        assert!((g.v_comp - expected).abs() < 1e-12);
    }
}
