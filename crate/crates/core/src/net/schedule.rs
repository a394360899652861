use serde::{Deserialize, Serialize};

/// Triangular learning-rate wave: `lr_min` at step 0, `lr_max` after
/// `half_cycle` steps, back to `lr_min` after `2 * half_cycle`.
pub fn cyclical_lr(step: u64, lr_min: f64, lr_max: f64, half_cycle: u64) -> f64 {
    let h = half_cycle.max(1);
    let pos = step % (2 * h);
    let frac = if pos <= h { pos as f64 / h as f64 } else { (2 * h - pos) as f64 / h as f64 };
    lr_min * (1.0 - frac) + lr_max * frac
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of updates applied.
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(cyclical_lr(0, 1e-9, 1e-3, 100), 1e-9);
        assert_eq!(cyclical_lr(100, 1e-9, 1e-3, 100), 1e-3);
        assert!((cyclical_lr(50, 1e-9, 1e-3, 100) - 5.000005e-4).abs() < 1e-18);
        assert_eq!(cyclical_lr(200, 1e-9, 1e-3, 100), 1e-9);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut a = Adam::new(2);
        let mut p = [1.0, -1.0];
        a.step(&mut p, &[0.5, -2.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 0.9).abs() < 1e-7);
    }

    proptest! {
        #[test]
        fn schedule_bounded_and_periodic(step in 0u64..1_000_000, h in 1u64..5000) {
            let lr = cyclical_lr(step, 1e-9, 1e-3, h);
            prop_assert!((1e-9..=1e-3).contains(&lr));
            prop_assert_eq!(lr, cyclical_lr(step + 2 * h, 1e-9, 1e-3, h));
        }
    }
}
