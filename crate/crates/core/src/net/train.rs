use std::path::Path;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::NetworkConfig;
use super::loss::{class_weights, focal_terms};
use super::model::{Model, INFERENCE_SEED};
use super::sampling::{FpsStart, SamplingPlan};
use super::schedule::{cyclical_lr, Adam};
use crate::dataset::{derive_seed, PreparedCloud};
use crate::error::{Error, Result};
use crate::eval::{evaluate_clouds, EvalReport};
use crate::features::{Standardizer, COL_X, COL_Y};
use crate::types::NUM_CLASSES;

/// Weight of the stationary class when class weights are derived from the
/// training frequencies.
pub const DEFAULT_STATIONARY_WEIGHT: f64 = 0.6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Clouds per optimizer step.
    pub batch_size: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    /// Steps from `lr_min` to `lr_max`; `None` = two epochs.
    pub half_cycle_steps: Option<u64>,
    pub gamma: f64,
    /// `None` derives moving/clutter weights from the training labels with
    /// the stationary weight fixed at 0.6.
    pub class_weights: Option<[f64; NUM_CLASSES]>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 8,
            lr_min: 1e-9,
            lr_max: 1e-3,
            half_cycle_steps: None,
            gamma: 2.0,
            class_weights: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if !(self.lr_min > 0.0 && self.lr_min < self.lr_max && self.lr_max.is_finite()) {
            return Err(Error::config("lr_min", "need 0 < lr_min < lr_max"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("gamma", "must be >= 0"));
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::config("class_weights", "must be positive"));
            }
        }
        if self.half_cycle_steps == Some(0) {
            return Err(Error::config("half_cycle_steps", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the per-batch mean losses.
    pub train_loss: f64,
    pub lr_min: f64,
    pub lr_max: f64,
    pub steps: u64,
    pub val_loss: Option<f64>,
    pub val_mean_f1: Option<f64>,
    pub val_confusion: Option<[[u64; NUM_CLASSES]; NUM_CLASSES]>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub optimizer: Adam,
    pub step: u64,
    pub lr_trace: Vec<f64>,
    pub class_weights: [f64; NUM_CLASSES],
    pub final_validation: Option<EvalReport>,
}

struct Example {
    features: Array2<f64>,
    plan: SamplingPlan,
    labels: Vec<usize>,
    mask: Vec<bool>,
    count: usize,
}

fn standardized(model: &Model, c: &PreparedCloud) -> Result<(Array2<f64>, Array2<f64>)> {
    let z = model.standardizer.apply(&c.features)?;
    let pos = z.slice(s![.., COL_X..=COL_Y]).to_owned();
    Ok((z, pos))
}

fn examples(model: &Model, clouds: &[PreparedCloud], start: impl Fn(usize) -> FpsStart) -> Result<Vec<Example>> {
    clouds
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (features, pos) = standardized(model, c)?;
            let plan = model.plan(pos.view(), start(i))?;
            let mask = c.loss_mask();
            let count = mask.iter().filter(|m| **m).count();
            Ok(Example {
                features,
                plan,
                labels: c.labels.clone(),
                mask,
                count,
            })
        })
        .collect()
}

/// Frequency-derived weights over non-replica training points.
pub fn derive_class_weights(clouds: &[PreparedCloud]) -> Result<[f64; NUM_CLASSES]> {
    let mut counts = [0usize; NUM_CLASSES];
    for c in clouds {
        for (l, r) in c.labels.iter().zip(&c.is_replica) {
            if !r {
                counts[*l] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    if counts.contains(&0) {
        return Err(Error::Training(format!(
            "cannot derive class weights: class counts {counts:?} contain an absent class"
        )));
    }
    let f = counts.map(|c| c as f64 / total as f64);
    let (wo, wc) = class_weights(f[0], f[1], f[2], DEFAULT_STATIONARY_WEIGHT)?;
    Ok([wo, wc, DEFAULT_STATIONARY_WEIGHT])
}

/// Mean focal loss over all loss-eligible points of `clouds` using the
/// inference sampling plan.
pub fn mean_loss(model: &Model, clouds: &[PreparedCloud], weights: [f64; NUM_CLASSES], gamma: f64) -> Result<f64> {
    let ex = examples(model, clouds, |_| FpsStart::Seeded(INFERENCE_SEED))?;
    let (mut sum, mut count) = (0.0, 0);
    for e in &ex {
        let (logits, _) = model.forward_planned(e.features.view(), &e.plan)?;
        let t = focal_terms(logits.view(), &e.labels, weights, gamma, &e.mask)?;
        sum += t.sum;
        count += t.count;
    }
    if count == 0 {
        return Err(Error::Contract("no loss-eligible points".into()));
    }
    Ok(sum / count as f64)
}

pub(crate) struct TrainState {
    pub model: Model,
    pub adam: Adam,
    pub step: u64,
    pub log: Vec<EpochLog>,
    pub lr_trace: Vec<f64>,
    pub class_weights: [f64; NUM_CLASSES],
}

/// Trains from scratch. The standardizer is fitted on `train_clouds`;
/// a checkpoint is written to `checkpoint` after every epoch.
pub fn train(
    train_clouds: &[PreparedCloud],
    val_clouds: &[PreparedCloud],
    network: &NetworkConfig,
    config: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_clouds.is_empty() {
        return Err(Error::Data("no training clouds".into()));
    }
    let standardizer = Standardizer::fit(train_clouds.iter().map(|c| (c.features.view(), c.is_replica.as_slice())))?;
    let model = Model::new(network.clone(), standardizer, config.seed)?;
    let class_weights = match config.class_weights {
        Some(w) => w,
        None => derive_class_weights(train_clouds)?,
    };
    let state = TrainState {
        adam: Adam::new(model.num_params()),
        model,
        step: 0,
        log: Vec::new(),
        lr_trace: Vec::new(),
        class_weights,
    };
    run(state, train_clouds, val_clouds, config, checkpoint)
}

/// Continues a run from a checkpoint up to `config.epochs` total epochs.
/// With the same data and config the result equals an uninterrupted run.
pub fn resume(
    checkpoint: Checkpoint,
    train_clouds: &[PreparedCloud],
    val_clouds: &[PreparedCloud],
    config: &TrainConfig,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let state = checkpoint.into_state()?;
    run(state, train_clouds, val_clouds, config, out)
}

fn run(
    mut st: TrainState,
    train_clouds: &[PreparedCloud],
    val_clouds: &[PreparedCloud],
    config: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainOutcome> {
    let train_ex = examples(&st.model, train_clouds, |i| FpsStart::Seeded(derive_seed(config.seed, 1, i as u64)))?;
    let steps_per_epoch = train_ex.len().div_ceil(config.batch_size) as u64;
    let half = config.half_cycle_steps.unwrap_or(2 * steps_per_epoch).max(1);
    let mut final_validation = None;
    let mut grads = vec![0.0; st.model.num_params()];
    for epoch in st.log.len()..config.epochs {
        let mut order: Vec<usize> = (0..train_ex.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2, epoch as u64)));
        let mut batch_losses = Vec::new();
        let (mut lr_lo, mut lr_hi) = (f64::INFINITY, 0.0f64);
        for batch in order.chunks(config.batch_size) {
            let count: usize = batch.iter().map(|&i| train_ex[i].count).sum();
            if count == 0 {
                continue;
            }
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut sum = 0.0;
            for &i in batch {
                let e = &train_ex[i];
                let (logits, tape) = st.model.forward_planned(e.features.view(), &e.plan)?;
                let t = focal_terms(logits.view(), &e.labels, st.class_weights, config.gamma, &e.mask)?;
                sum += t.sum;
                st.model.backward(&e.plan, &tape, t.grad / count as f64, &mut grads)?;
            }
            let loss = sum / count as f64;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {} step {}; log so far: {:?}",
                    epoch + 1,
                    st.step,
                    st.log
                )));
            }
            let lr = cyclical_lr(st.step, config.lr_min, config.lr_max, half);
            lr_lo = lr_lo.min(lr);
            lr_hi = lr_hi.max(lr);
            st.adam.step(&mut st.model.params, &grads, lr);
            st.lr_trace.push(lr);
            st.step += 1;
            batch_losses.push(loss);
        }
        let train_loss = batch_losses.iter().sum::<f64>() / batch_losses.len().max(1) as f64;
        let (val_loss, val_mean_f1, val_confusion) = if val_clouds.is_empty() {
            (None, None, None)
        } else {
            let report = evaluate_clouds(&st.model, val_clouds)?;
            let vl = mean_loss(&st.model, val_clouds, st.class_weights, config.gamma)?;
            let out = (Some(vl), Some(report.mean_f1), Some(report.confusion.counts));
            final_validation = Some(report);
            out
        };
        let entry = EpochLog {
            epoch: epoch + 1,
            train_loss,
            lr_min: lr_lo,
            lr_max: lr_hi,
            steps: st.step,
            val_loss,
            val_mean_f1,
            val_confusion,
        };
        log::info!(
            "epoch {}: train loss {:.5}, val mean F1 {}",
            entry.epoch,
            entry.train_loss,
            entry.val_mean_f1.map_or("-".into(), |f| format!("{f:.4}"))
        );
        st.log.push(entry);
        if let Some(path) = checkpoint {
            Checkpoint::from_state(&st, config).save(path)?;
        }
    }
    Ok(TrainOutcome {
        model: st.model,
        log: st.log,
        optimizer: st.adam,
        step: st.step,
        lr_trace: st.lr_trace,
        class_weights: st.class_weights,
        final_validation,
    })
}

impl TrainOutcome {
    pub fn checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        Checkpoint::from_parts(
            &self.model,
            &self.optimizer,
            config,
            self.class_weights,
            self.step,
            &self.log,
            &self.lr_trace,
        )
    }
}
