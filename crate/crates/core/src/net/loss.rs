use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::types::NUM_CLASSES;

/// Weights for moving object and clutter such that both classes carry the
/// same total weight and the frequency-weighted mean weight is 1:
/// `w_o f_o = w_c f_c` and `w_o f_o + w_c f_c + w_s f_s = 1`.
pub fn class_weights(f_moving: f64, f_clutter: f64, f_stationary: f64, w_stationary: f64) -> Result<(f64, f64)> {
    for (name, f) in [("f_moving", f_moving), ("f_clutter", f_clutter), ("f_stationary", f_stationary)] {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Domain {
                field: name,
                value: f,
                reason: "frequencies must be positive".into(),
            });
        }
    }
    let sum = f_moving + f_clutter + f_stationary;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Domain {
            field: "frequencies",
            value: sum,
            reason: "must sum to 1".into(),
        });
    }
    let rest = 1.0 - w_stationary * f_stationary;
    if !(rest > 0.0) {
        return Err(Error::Infeasible(format!(
            "w_stationary * f_stationary = {} leaves no weight for the other classes",
            w_stationary * f_stationary
        )));
    }
    Ok((rest / 2.0 / f_moving, rest / 2.0 / f_clutter))
}

/// Per-point focal terms: `sum` of `-w (1 - p)^gamma ln p` over masked
/// points, their `count`, and `d sum / d logits`.
pub struct FocalTerms {
    pub sum: f64,
    pub count: usize,
    pub grad: Array2<f64>,
}

pub fn focal_terms(
    logits: ArrayView2<f64>,
    labels: &[usize],
    weights: [f64; NUM_CLASSES],
    gamma: f64,
    mask: &[bool],
) -> Result<FocalTerms> {
    let n = logits.nrows();
    if logits.ncols() != NUM_CLASSES || labels.len() != n || mask.len() != n {
        return Err(Error::Contract(format!(
            "focal loss: logits {}x{}, {} labels, {} mask entries",
            n,
            logits.ncols(),
            labels.len(),
            mask.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0;
    let mut grad = Array2::zeros((n, NUM_CLASSES));
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        let t = labels[i];
        if t >= NUM_CLASSES {
            return Err(Error::Contract(format!("focal loss: label {t} at point {i} is not a class")));
        }
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        let log_p = row[t] - lse;
        let p = log_p.exp();
        let q = -log_p.exp_m1();
        let w = weights[t];
        sum += -w * q.powf(gamma) * log_p;
        count += 1;
        // d/dz_j = g (delta_tj - p_j) with g = -w [(1-p)^gamma - gamma p (1-p)^(gamma-1) ln p].
        let g = if q == 0.0 && gamma > 0.0 {
            0.0
        } else {
            let tail = if gamma == 0.0 { 0.0 } else { gamma * p * q.powf(gamma - 1.0) * log_p };
            -w * (q.powf(gamma) - tail)
        };
        for j in 0..NUM_CLASSES {
            let pj = (row[j] - lse).exp();
            let delta = if j == t { 1.0 } else { 0.0 };
            grad[[i, j]] = g * (delta - pj);
        }
    }
    Ok(FocalTerms { sum, count, grad })
}

/// Mean focal loss over masked points.
pub fn focal_loss(
    logits: ArrayView2<f64>,
    labels: &[usize],
    weights: [f64; NUM_CLASSES],
    gamma: f64,
    mask: &[bool],
) -> Result<f64> {
    let t = focal_terms(logits, labels, weights, gamma, mask)?;
    if t.count == 0 {
        return Err(Error::Contract("focal loss: empty mask".into()));
    }
    Ok(t.sum / t.count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn weights_examples() {
        let (wo, wc) = class_weights(0.0335, 0.0557, 0.9108, 0.6).unwrap();
        assert!((wo * 0.0335 - wc * 0.0557).abs() < 1e-12);
        assert!((wo * 0.0335 + wc * 0.0557 + 0.6 * 0.9108 - 1.0).abs() < 1e-12);
        let (wo, wc) = class_weights(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.6).unwrap();
        assert!((wo - 1.2).abs() < 1e-12 && (wc - 1.2).abs() < 1e-12);
        assert!(matches!(class_weights(0.05, 0.05, 0.9, 1.2), Err(Error::Infeasible(_))));
        assert!(class_weights(0.0, 0.1, 0.9, 0.6).is_err());
    }

    #[test]
    fn loss_examples() {
        // p_t = 0.5 with two equal logits and a third at -inf-ish.
        let l = array![[0.0, 0.0, -800.0]];
        let v = focal_loss(l.view(), &[0], [2.0, 1.0, 1.0], 2.0, &[true]).unwrap();
        assert!((v - 2.0 * 0.25 * 2f64.ln()).abs() < 1e-12);
        let sure = array![[900.0, 0.0, 0.0]];
        let t = focal_terms(sure.view(), &[0], [1.0; 3], 2.0, &[true]).unwrap();
        assert_eq!(t.sum, 0.0);
        assert!(t.grad.iter().all(|g| *g == 0.0));
        assert!(focal_loss(l.view(), &[0], [1.0; 3], 2.0, &[false]).is_err());
    }

    #[test]
    fn masked_points_do_not_count() {
        let l = array![[1.0, 0.0, 0.0], [0.0, 5.0, 0.0]];
        let a = focal_loss(l.view(), &[0, 0], [1.0; 3], 2.0, &[true, false]).unwrap();
        let b = focal_loss(l.slice(ndarray::s![..1, ..]), &[0], [1.0; 3], 2.0, &[true]).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn weights_satisfy_constraints(a in 0.001..1.0f64, b in 0.001..1.0f64, c in 0.001..1.0f64) {
            let s = a + b + c;
            let (fo, fc, fs) = (a / s, b / s, 1.0 - a / s - b / s);
            prop_assume!(fs > 0.0);
            let (wo, wc) = class_weights(fo, fc, fs, 0.6).unwrap();
            prop_assert!((wo * fo - wc * fc).abs() < 1e-12);
            prop_assert!((wo * fo + wc * fc + 0.6 * fs - 1.0).abs() < 1e-12);
        }

        #[test]
        fn gradient_matches_finite_differences(
            z in prop::collection::vec(-4.0..4.0f64, 3), t in 0usize..3, gamma in 0.0..3.0f64
        ) {
            let logits = Array2::from_shape_vec((1, 3), z.clone()).unwrap();
            let w = [1.5, 0.7, 2.0];
            let g = focal_terms(logits.view(), &[t], w, gamma, &[true]).unwrap().grad;
            for j in 0..3 {
                let h = 1e-6;
                let mut up = logits.clone();
                up[[0, j]] += h;
                let mut dn = logits.clone();
                dn[[0, j]] -= h;
                let num = (focal_loss(up.view(), &[t], w, gamma, &[true]).unwrap()
                    - focal_loss(dn.view(), &[t], w, gamma, &[true]).unwrap()) / (2.0 * h);
                prop_assert!((num - g[[0, j]]).abs() < 1e-6 * (1.0 + num.abs()));
            }
        }
    }
}
