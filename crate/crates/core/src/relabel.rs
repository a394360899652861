//! Conversion of object/background annotations into moving object, clutter
//! and stationary labels.
//!
//! Rules, applied per scan:
//! 1. an object-annotated detection is a moving object;
//! 2. a background detection within `range_tol` in range and within the
//!    view-angle dependent azimuth tolerance of some rule-1 detection of the
//!    same scan is a moving object;
//! 3. a remaining background detection with `|v_comp| >= v_threshold` is
//!    clutter;
//! 4. everything else is stationary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Annotation, Label, Scan, NUM_CLASSES};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelabelParams {
    /// Meters.
    pub range_tol: f64,
    /// Azimuth tolerance at boresight, degrees.
    pub az_tol_min: f64,
    /// Azimuth tolerance at `az_tol_max_angle`, degrees.
    pub az_tol_max: f64,
    pub az_tol_max_angle: f64,
    /// Minimum `|v_comp|` of clutter, m/s.
    pub v_threshold: f64,
}

impl Default for RelabelParams {
    fn default() -> Self {
        RelabelParams {
            range_tol: 0.3,
            az_tol_min: 2.0,
            az_tol_max: 4.0,
            az_tol_max_angle: 60.0,
            v_threshold: 0.5,
        }
    }
}

impl RelabelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("range_tol", self.range_tol),
            ("az_tol_min", self.az_tol_min),
            ("az_tol_max", self.az_tol_max),
            ("az_tol_max_angle", self.az_tol_max_angle),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("{v} must be positive")));
            }
        }
        // Zero is allowed: every moving background return becomes clutter.
        if !(self.v_threshold >= 0.0 && self.v_threshold.is_finite()) {
            return Err(Error::config("v_threshold", format!("{} must be non-negative", self.v_threshold)));
        }
        if self.az_tol_min > self.az_tol_max {
            return Err(Error::config("az_tol_min", "must not exceed az_tol_max"));
        }
        Ok(())
    }
}

/// Azimuth tolerance in degrees, linear in `|view_angle_deg|`.
pub fn azimuth_tolerance(view_angle_deg: f64, params: &RelabelParams) -> f64 {
    params.az_tol_min
        + (params.az_tol_max - params.az_tol_min) * view_angle_deg.abs() / params.az_tol_max_angle
}

/// Labels every detection of `scan` in place.
pub fn relabel_scan(scan: &mut Scan, params: &RelabelParams) -> Result<()> {
    let mut objects = Vec::new();
    for (i, d) in scan.detections.iter().enumerate() {
        match &d.original_annotation {
            None => {
                return Err(Error::Data(format!(
                    "scan {}: detection {i} has no original annotation",
                    scan.scan_id
                )))
            }
            Some(Annotation::Object(_)) => objects.push((d.range, d.azimuth_deg)),
            Some(Annotation::Background) => {}
        }
    }
    for d in &mut scan.detections {
        d.label = if d.original_annotation.as_ref().is_some_and(Annotation::is_object) {
            Label::MovingObject
        } else {
            let tol = azimuth_tolerance(d.azimuth_deg, params);
            let near = objects.iter().any(|&(r, az)| {
                (d.range - r).abs() <= params.range_tol && (d.azimuth_deg - az).abs() <= tol
            });
            if near {
                Label::MovingObject
            } else if d.v_comp.abs() >= params.v_threshold {
                Label::Clutter
            } else {
                Label::Stationary
            }
        };
    }
    Ok(())
}

/// Per-class detection counts, indexed by [`Label::class_index`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: [usize; NUM_CLASSES],
}

impl ClassDistribution {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Fractions summing to 1; all zero for an empty distribution.
    pub fn ratios(&self) -> [f64; NUM_CLASSES] {
        let total = self.total();
        if total == 0 {
            return [0.0; NUM_CLASSES];
        }
        self.counts.map(|c| c as f64 / total as f64)
    }

    pub fn add_scan(&mut self, scan: &Scan) {
        for d in &scan.detections {
            if let Some(k) = d.label.class_index() {
                self.counts[k] += 1;
            }
        }
    }
}

/// Relabels every scan and returns the resulting class distribution.
pub fn relabel_dataset(scans: &mut [Scan], params: &RelabelParams) -> Result<ClassDistribution> {
    if scans.is_empty() {
        return Err(Error::Data("relabel_dataset: no scans".into()));
    }
    params.validate()?;
    let mut dist = ClassDistribution::default();
    for scan in scans.iter_mut() {
        relabel_scan(scan, params)?;
        dist.add_scan(scan);
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Detection, EgoState, Pose2};
    use proptest::prelude::*;
    use serde_json::Map;

    fn scan(dets: Vec<Detection>) -> Scan {
        Scan {
            scan_id: 7,
            sensor_id: 1,
            timestamp_us: 0,
            ego: EgoState {
                pose: Pose2::default(),
                speed: 0.0,
                yaw_rate: 0.0,
                timestamp_us: 0,
            },
            detections: dets,
            extra: Map::new(),
        }
    }

    fn bg(r: f64, az: f64, v: f64) -> Detection {
        Detection::new(r, az, v, v, 0.0).with_annotation(Annotation::Background)
    }

    fn car(r: f64, az: f64) -> Detection {
        Detection::new(r, az, 0.0, 0.0, 0.0).with_annotation(Annotation::Object("car".into()))
    }

    #[test]
    fn tolerance_endpoints() {
        let p = RelabelParams::default();
        assert_eq!(azimuth_tolerance(0.0, &p), 2.0);
        assert_eq!(azimuth_tolerance(60.0, &p), 4.0);
        assert_eq!(azimuth_tolerance(-30.0, &p), 3.0);
    }

    #[test]
    fn rule_examples() {
        let p = RelabelParams::default();
        let mut s = scan(vec![
            car(20.0, 0.0),
            bg(20.2, 1.5, 0.0),
            bg(50.0, 30.0, 0.49),
            bg(50.0, -30.0, 0.51),
            bg(50.0, 10.0, -0.51),
        ]);
        relabel_scan(&mut s, &p).unwrap();
        let labels: Vec<_> = s.detections.iter().map(|d| d.label).collect();
        assert_eq!(
            labels,
            [
                Label::MovingObject,
                Label::MovingObject,
                Label::Stationary,
                Label::Clutter,
                Label::Clutter
            ]
        );
    }

    #[test]
    fn tolerance_uses_background_view_angle() {
        let p = RelabelParams::default();
        // At 60 degrees the band is 4 degrees wide; at 0 degrees only 2.
        let mut s = scan(vec![car(20.0, 56.5), bg(20.0, 60.0, 3.0), car(30.0, 3.5), bg(30.0, 0.0, 3.0)]);
        relabel_scan(&mut s, &p).unwrap();
        assert_eq!(s.detections[1].label, Label::MovingObject);
        assert_eq!(s.detections[3].label, Label::Clutter);
    }

    #[test]
    fn missing_annotation_names_scan() {
        let mut s = scan(vec![Detection::new(1.0, 0.0, 0.0, 0.0, 0.0)]);
        let err = relabel_scan(&mut s, &RelabelParams::default()).unwrap_err();
        assert!(matches!(&err, Error::Data(m) if m.contains("scan 7")));
    }

    #[test]
    fn no_transitive_growth() {
        let mut s = scan(vec![car(20.0, 0.0), bg(20.25, 0.0, 5.0), bg(20.5, 0.0, 5.0)]);
        relabel_scan(&mut s, &RelabelParams::default()).unwrap();
        assert_eq!(s.detections[1].label, Label::MovingObject);
        assert_eq!(s.detections[2].label, Label::Clutter);
    }

    #[test]
    fn dataset_distribution() {
        let mut scans = vec![scan(vec![bg(5.0, 0.0, 0.0), bg(6.0, 0.0, 0.1)])];
        let dist = relabel_dataset(&mut scans, &RelabelParams::default()).unwrap();
        assert_eq!(dist.ratios(), [0.0, 0.0, 1.0]);
        assert!(relabel_dataset(&mut [], &RelabelParams::default()).is_err());
    }

    #[test]
    fn proximity_is_per_scan() {
        let mut scans = vec![scan(vec![car(20.0, 0.0)]), scan(vec![bg(20.0, 0.0, 3.0)])];
        relabel_dataset(&mut scans, &RelabelParams::default()).unwrap();
        assert_eq!(scans[1].detections[0].label, Label::Clutter);
    }

    #[test]
    fn synthetic_distribution_matches_generator_tallies() {
        use crate::synth::{generate_recording, preset};
        use crate::types::TrueSource;
        let mut rec = generate_recording(&preset("urban", 3).unwrap()).unwrap();
        let dist = relabel_dataset(&mut rec.scans, &RelabelParams::default()).unwrap();
        let mut truth = [0usize; 3];
        let mut reassigned = 0;
        for d in rec.scans.iter().flat_map(|s| &s.detections) {
            let k = match d.true_source {
                TrueSource::RealMoving => 0,
                TrueSource::RealStationary => 2,
                _ => 1,
            };
            truth[k] += 1;
            if d.label.class_index() != Some(k) {
                reassigned += 1;
            }
        }
        assert_eq!(dist.total(), truth.iter().sum::<usize>());
        // Disagreement comes only from the tolerance band and the velocity
        // threshold acting on noisy measurements.
        assert!((reassigned as f64) < 0.05 * dist.total() as f64, "{reassigned}");
    }

    fn arb_scan() -> impl Strategy<Value = Scan> {
        prop::collection::vec(
            (0.0..40.0f64, -60.0..60.0f64, -3.0..3.0f64, prop::bool::weighted(0.2)),
            1..60,
        )
        .prop_map(|pts| {
            scan(
                pts.into_iter()
                    .map(|(r, az, v, obj)| if obj { car(r, az) } else { bg(r, az, v) })
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn every_detection_gets_one_class(mut s in arb_scan()) {
            relabel_scan(&mut s, &RelabelParams::default()).unwrap();
            prop_assert!(s.detections.iter().all(|d| d.label.class_index().is_some()));
        }

        #[test]
        fn larger_tolerances_never_shrink_moving(s in arb_scan(), dr in 0.0..1.0f64, da in 0.0..3.0f64) {
            let base = RelabelParams::default();
            let wide = RelabelParams {
                range_tol: base.range_tol + dr,
                az_tol_min: base.az_tol_min + da,
                az_tol_max: base.az_tol_max + da,
                ..base
            };
            let count = |p: &RelabelParams| {
                let mut s = s.clone();
                relabel_scan(&mut s, p).unwrap();
                s.detections.iter().filter(|d| d.label == Label::MovingObject).count()
            };
            prop_assert!(count(&wide) >= count(&base));
        }
    }
}
