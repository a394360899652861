//! Central-difference gradient check of the hand-written backward pass.

use ndarray::ArrayView2;

use super::loss::focal_terms;
use super::model::Model;
use super::sampling::SamplingPlan;
use crate::error::{Error, Result};
use crate::types::NUM_CLASSES;

/// Denominator floor of the relative error, so parameters whose gradient is
/// numerically zero are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Step reductions tried when a perturbation crosses a ReLU or max-pool
/// switch point.
const MAX_STEP_REDUCTIONS: u32 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked: usize,
    /// Parameters that needed a smaller step to stay on one smooth piece.
    pub reduced_step: usize,
    /// Parameters where even the smallest step crossed a switch point; they
    /// are compared against the closer one-sided difference.
    pub unresolved_kinks: usize,
}

/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares analytic and central-difference gradients of the mean focal
/// loss for every parameter. The plan is held fixed; when `θ ± h` changes
/// which ReLUs are active or which rows win a max-pool, `h` is divided by
/// ten, up to three times. Zero-initialized biases put dead units exactly
/// on a switch point, where no step size helps.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    model: &Model,
    features: ArrayView2<f64>,
    plan: &SamplingPlan,
    labels: &[usize],
    mask: &[bool],
    weights: [f64; NUM_CLASSES],
    gamma: f64,
    h: f64,
) -> Result<GradCheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Contract(format!("gradient check step {h} must be positive")));
    }
    let eval = |m: &Model| -> Result<(f64, Vec<u64>)> {
        let (logits, tape) = m.forward_planned(features, plan)?;
        let t = focal_terms(logits.view(), labels, weights, gamma, mask)?;
        if t.count == 0 {
            return Err(Error::Contract("gradient check: empty mask".into()));
        }
        Ok((t.sum / t.count as f64, tape.signature()))
    };
    let (logits, tape) = model.forward_planned(features, plan)?;
    let t = focal_terms(logits.view(), labels, weights, gamma, mask)?;
    if t.count == 0 {
        return Err(Error::Contract("gradient check: empty mask".into()));
    }
    let base_sig = tape.signature();
    let base_loss = t.sum / t.count as f64;
    let mut analytic = vec![0.0; model.num_params()];
    model.backward(plan, &tape, t.grad / t.count as f64, &mut analytic)?;

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        checked: 0,
        reduced_step: 0,
        unresolved_kinks: 0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let orig = model.params[i];
        let mut step = h;
        let mut numeric = 0.0;
        let mut one_sided = (0.0, 0.0);
        let mut clean = false;
        for attempt in 0..=MAX_STEP_REDUCTIONS {
            probe.params[i] = orig + step;
            let (lp, sp) = eval(&probe)?;
            probe.params[i] = orig - step;
            let (lm, sm) = eval(&probe)?;
            numeric = (lp - lm) / (2.0 * step);
            one_sided = ((lp - base_loss) / step, (base_loss - lm) / step);
            if sp == base_sig && sm == base_sig {
                clean = true;
                if attempt > 0 {
                    report.reduced_step += 1;
                }
                break;
            }
            step /= 10.0;
        }
        probe.params[i] = orig;
        let mut err = relative_error(a, numeric);
        if !clean {
            // Sitting on a switch point: the analytic value is one of the
            // one-sided derivatives.
            report.unresolved_kinks += 1;
            err = err.min(relative_error(a, one_sided.0)).min(relative_error(a, one_sided.1));
        }
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst_param = match model.layout().locate(i) {
                Some((name, off)) => format!("{name}[{off}]"),
                None => format!("#{i}"),
            };
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Standardizer;
    use crate::net::{FpsStart, NetworkConfig};
    use ndarray::{s, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tiny_network_passes() {
        let cfg = NetworkConfig::tiny_b();
        let n = cfg.input_points;
        let model = Model::new(cfg, Standardizer::identity(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = Array2::zeros((n, crate::features::NUM_FEATURES));
        for i in 0..n {
            for k in 0..7 {
                x[[i, k]] = rng.random_range(-1.0..1.0);
            }
            x[[i, 7 + i % 4]] = 1.0;
        }
        let pos = x.slice(s![.., 0..2]).to_owned();
        let plan = model.plan(pos.view(), FpsStart::Seeded(1)).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let r = gradient_check(&model, x.view(), &plan, &labels, &vec![true; n], [1.0, 2.0, 0.5], 2.0, 1e-4).unwrap();
        assert_eq!(r.checked, model.num_params());
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
