//! Per-point feature rows and their standardization.
//!
//! Column layout: `x, y` (vehicle frame at latest scan time), `range`,
//! `azimuth` (sensor frame, degrees), `v_comp`, `rcs`, `dt`, then a one-hot
//! of the sensor id (1..=4). Only the first seven columns are standardized;
//! `x` and `y` share one scale so Euclidean distances shrink uniformly.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::accum::CloudPoint;
use crate::error::{Error, Result};
use crate::types::MAX_SENSORS;

pub const NUM_FEATURES: usize = 11;
pub const NUM_CONTINUOUS: usize = 7;

pub const COL_X: usize = 0;
pub const COL_Y: usize = 1;
pub const COL_RANGE: usize = 2;
pub const COL_AZIMUTH: usize = 3;
pub const COL_V_COMP: usize = 4;
pub const COL_RCS: usize = 5;
pub const COL_DT: usize = 6;
pub const COL_SENSOR: usize = 7;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "x", "y", "range", "azimuth", "v_comp", "rcs", "dt", "sensor_1", "sensor_2", "sensor_3", "sensor_4",
];

pub fn feature_row(p: &CloudPoint) -> Result<[f64; NUM_FEATURES]> {
    let d = &p.detection;
    let mut row = [0.0; NUM_FEATURES];
    row[..NUM_CONTINUOUS].copy_from_slice(&[
        p.position.x,
        p.position.y,
        d.range,
        d.azimuth_deg,
        d.v_comp,
        d.rcs,
        p.dt,
    ]);
    if let Some(k) = row[..NUM_CONTINUOUS].iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "scan {}: feature `{}` is not finite",
            p.scan_id, FEATURE_NAMES[k]
        )));
    }
    let s = usize::from(p.sensor_id);
    if !(1..=MAX_SENSORS).contains(&s) {
        return Err(Error::Data(format!("scan {}: sensor id {s} outside 1..=4", p.scan_id)));
    }
    row[COL_SENSOR + s - 1] = 1.0;
    Ok(row)
}

/// N x 11 feature matrix in cloud order.
pub fn assemble(cloud: &[CloudPoint]) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((cloud.len(), NUM_FEATURES));
    for (mut row, p) in m.axis_iter_mut(Axis(0)).zip(cloud) {
        row.assign(&ndarray::ArrayView1::from(&feature_row(p)?));
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; NUM_CONTINUOUS],
    /// Strictly positive; `scale[COL_X] == scale[COL_Y]`.
    pub scale: [f64; NUM_CONTINUOUS],
    /// Columns whose variance was zero and whose scale was clamped to 1.
    #[serde(default)]
    pub clamped: Vec<String>,
}

impl Standardizer {
    pub fn identity() -> Self {
        Standardizer {
            mean: [0.0; NUM_CONTINUOUS],
            scale: [1.0; NUM_CONTINUOUS],
            clamped: Vec::new(),
        }
    }

    /// Population mean and variance over all non-replica rows.
    pub fn fit<'a, I>(batches: I) -> Result<Self>
    where
        I: IntoIterator<Item = (ArrayView2<'a, f64>, &'a [bool])> + Clone,
    {
        let mut n = 0usize;
        let mut sum = [0.0; NUM_CONTINUOUS];
        for (m, replica) in batches.clone() {
            check_shape(&m, replica.len())?;
            for (row, &rep) in m.axis_iter(Axis(0)).zip(replica) {
                if rep {
                    continue;
                }
                n += 1;
                for (s, v) in sum.iter_mut().zip(row.iter()) {
                    *s += v;
                }
            }
        }
        if n < 2 {
            return Err(Error::Data(format!("standardizer needs >= 2 rows, got {n}")));
        }
        let mean = sum.map(|s| s / n as f64);
        let mut sq = [0.0; NUM_CONTINUOUS];
        for (m, replica) in batches {
            for (row, &rep) in m.axis_iter(Axis(0)).zip(replica) {
                if rep {
                    continue;
                }
                for k in 0..NUM_CONTINUOUS {
                    let d = row[k] - mean[k];
                    sq[k] += d * d;
                }
            }
        }
        let mut var = sq.map(|s| s / n as f64);
        let xy = (var[COL_X] + var[COL_Y]) / 2.0;
        var[COL_X] = xy;
        var[COL_Y] = xy;
        let mut clamped = Vec::new();
        let scale = std::array::from_fn(|k| {
            if var[k] > 0.0 {
                var[k].sqrt()
            } else {
                log::warn!("feature `{}` has zero variance; scale clamped to 1", FEATURE_NAMES[k]);
                clamped.push(FEATURE_NAMES[k].to_string());
                1.0
            }
        });
        Ok(Standardizer { mean, scale, clamped })
    }

    /// `(value - mean) / scale` on the continuous columns; one-hot columns
    /// pass through.
    pub fn apply(&self, m: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape(&m.view(), m.nrows())?;
        let mut out = m.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for k in 0..NUM_CONTINUOUS {
                row[k] = (row[k] - self.mean[k]) / self.scale[k];
            }
        }
        Ok(out)
    }

    pub fn xy_scale(&self) -> f64 {
        self.scale[COL_X]
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::Data("standardizer has non-positive or non-finite parameters".into()));
        }
        if self.scale[COL_X] != self.scale[COL_Y] {
            return Err(Error::Data("standardizer x and y scales differ".into()));
        }
        Ok(())
    }
}

fn check_shape(m: &ArrayView2<f64>, rows: usize) -> Result<()> {
    if m.ncols() != NUM_FEATURES {
        return Err(Error::Data(format!("expected {NUM_FEATURES} feature columns, got {}", m.ncols())));
    }
    if m.nrows() != rows {
        return Err(Error::Data(format!("{} rows but {rows} replica flags", m.nrows())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Detection, Vec2};
    use ndarray::array;
    use proptest::prelude::*;

    fn point(x: f64, y: f64, sensor: u8) -> CloudPoint {
        CloudPoint {
            detection: Detection::new((x * x + y * y).sqrt(), 0.0, 0.0, 1.0, 2.0),
            position: Vec2::new(x, y),
            dt: 0.0,
            is_replica: false,
            scan_id: 0,
            sensor_id: sensor,
            index: 0,
        }
    }

    fn fit_one(m: &Array2<f64>) -> Standardizer {
        let mask = vec![false; m.nrows()];
        Standardizer::fit([(m.view(), mask.as_slice())]).unwrap()
    }

    #[test]
    fn assemble_examples() {
        let mut replica = point(10.0, 0.0, 3);
        replica.is_replica = true;
        let m = assemble(&[point(10.0, 0.0, 3), replica]).unwrap();
        assert_eq!(m.row(0).to_vec(), [10.0, 0.0, 10.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(m.row(0), m.row(1));
        assert!(assemble(&[point(1.0, 0.0, 5)]).is_err());
        let mut bad = point(1.0, 0.0, 1);
        bad.detection.rcs = f64::NAN;
        assert!(matches!(assemble(&[bad]), Err(Error::Data(m)) if m.contains("rcs")));
    }

    #[test]
    fn shared_xy_scale_example() {
        let m = assemble(&[point(0.0, 0.0, 1), point(2.0, 0.0, 1)]).unwrap();
        let s = fit_one(&m);
        assert!((s.scale[COL_X] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.scale[COL_X], s.scale[COL_Y]);
        // constant rcs and v_comp columns
        assert_eq!(s.scale[COL_RCS], 1.0);
        assert_eq!(s.mean[COL_RCS], 2.0);
        assert!(s.clamped.contains(&"rcs".to_string()));
        assert_eq!(s, fit_one(&m));
    }

    #[test]
    fn replicas_do_not_enter_fit() {
        let m = array![
            [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            [2.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            [100.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
        ];
        let mask = [false, false, true];
        let s = Standardizer::fit([(m.view(), &mask[..])]).unwrap();
        assert_eq!(s.mean[COL_X], 1.0);
        assert!(Standardizer::fit([(m.view(), &[false, true, true][..])]).is_err());
    }

    #[test]
    fn apply_centers_and_passes_one_hots() {
        let cloud: Vec<CloudPoint> = (0..20).map(|i| point(i as f64, (i * i) as f64 * 0.1, 1 + (i % 4) as u8)).collect();
        let m = assemble(&cloud).unwrap();
        let s = fit_one(&m);
        let z = s.apply(&m).unwrap();
        for k in 0..NUM_CONTINUOUS {
            assert!(z.column(k).mean().unwrap().abs() < 1e-9);
        }
        assert_eq!(z.slice(ndarray::s![.., COL_SENSOR..]), m.slice(ndarray::s![.., COL_SENSOR..]));
        assert!(s.apply(&Array2::zeros((2, 5))).is_err());
    }

    #[test]
    fn isotropy_example() {
        let s = Standardizer {
            scale: [1.5, 1.5, 1.0, 1.0, 1.0, 1.0, 1.0],
            ..Standardizer::identity()
        };
        let m = assemble(&[point(0.0, 0.0, 1), point(3.0, 0.0, 1)]).unwrap();
        let z = s.apply(&m).unwrap();
        assert!((z[[1, 0]] - z[[0, 0]] - 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn standardized_distances_are_scaled_raw_distances(
            pts in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 2..60)
        ) {
            let cloud: Vec<CloudPoint> = pts.iter().map(|&(x, y)| point(x, y, 2)).collect();
            let m = assemble(&cloud).unwrap();
            let s = fit_one(&m);
            let z = s.apply(&m).unwrap();
            for i in 0..m.nrows() {
                for j in 0..i {
                    let raw = (m[[i, 0]] - m[[j, 0]]).hypot(m[[i, 1]] - m[[j, 1]]);
                    let st = (z[[i, 0]] - z[[j, 0]]).hypot(z[[i, 1]] - z[[j, 1]]);
                    prop_assert!((st - raw / s.xy_scale()).abs() <= 1e-9 * (1.0 + raw / s.xy_scale()));
                }
            }
        }
    }
}
