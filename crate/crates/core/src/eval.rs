//! Latest-scan metrics, nearest-neighbor label copying and inference timing.

use std::time::Instant;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::PreparedCloud;
use crate::error::{Error, Result};
use crate::features::{COL_X, COL_Y};
use crate::net::Model;
use crate::types::{Label, NUM_CLASSES};

/// Rows are truth, columns prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn add(&mut self, other: &Confusion) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }

    fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= NUM_CLASSES || pred >= NUM_CLASSES {
            return Err(Error::Contract(format!("class index out of range: truth {truth}, prediction {pred}")));
        }
        self.counts[truth][pred] += 1;
        Ok(())
    }

    /// Header row then one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth\\prediction");
        for l in Label::CLASSES {
            out.push(',');
            out.push_str(l.name());
        }
        out.push('\n');
        for (l, row) in Label::CLASSES.iter().zip(&self.counts) {
            out.push_str(l.name());
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Counts masked points only.
pub fn confusion(predictions: &[usize], truths: &[usize], mask: &[bool]) -> Result<Confusion> {
    if predictions.len() != truths.len() || truths.len() != mask.len() {
        return Err(Error::Contract(format!(
            "confusion: {} predictions, {} truths, {} mask entries",
            predictions.len(),
            truths.len(),
            mask.len()
        )));
    }
    let mut c = Confusion::default();
    for ((&p, &t), &m) in predictions.iter().zip(truths).zip(mask) {
        if m {
            c.record(t, p)?;
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Denominator was zero; the metric is reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub mean_f1: f64,
    /// Human-readable notes for undefined metrics.
    pub flags: Vec<String>,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Unweighted mean.
pub fn macro_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn prf1(c: &Confusion) -> Metrics {
    let mut flags = Vec::new();
    let per_class = std::array::from_fn(|k| {
        let tp = c.counts[k][k];
        let predicted: u64 = (0..NUM_CLASSES).map(|t| c.counts[t][k]).sum();
        let actual: u64 = c.counts[k].iter().sum();
        let (precision, precision_undefined) = ratio(tp, predicted);
        let (recall, recall_undefined) = ratio(tp, actual);
        let name = Label::CLASSES[k].name();
        if precision_undefined {
            flags.push(format!("{name}: precision undefined (never predicted)"));
        }
        if recall_undefined {
            flags.push(format!("{name}: recall undefined (absent from truth)"));
        }
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            precision_undefined,
            recall_undefined,
        }
    });
    let f1s: Vec<f64> = per_class.iter().map(|m: &ClassMetrics| m.f1).collect();
    Metrics {
        mean_f1: macro_mean(&f1s),
        per_class,
        flags,
    }
}

/// Row-wise argmax; ties go to the lower class index.
pub fn argmax_rows(logits: ArrayView2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for j in 1..r.len() {
                if r[j] > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Label of the nearest survivor in the `(x, y)` plane for every removed
/// point; ties go to the lowest survivor index.
pub fn nn_postprocess(
    survivors: ArrayView2<f64>,
    survivor_predictions: &[usize],
    removed: ArrayView2<f64>,
) -> Result<Vec<usize>> {
    if survivors.nrows() == 0 {
        return Err(Error::Contract("nearest-neighbor post-processing needs at least one survivor".into()));
    }
    if survivors.nrows() != survivor_predictions.len() || survivors.ncols() != 2 || removed.ncols() != 2 {
        return Err(Error::Contract(format!(
            "nearest-neighbor post-processing: {}x{} survivors, {} predictions, {} removed columns",
            survivors.nrows(),
            survivors.ncols(),
            survivor_predictions.len(),
            removed.ncols()
        )));
    }
    Ok(removed
        .rows()
        .into_iter()
        .map(|q| {
            let mut best = (f64::INFINITY, 0);
            for (i, s) in survivors.rows().into_iter().enumerate() {
                let d = (s[0] - q[0]).powi(2) + (s[1] - q[1]).powi(2);
                if d < best.0 {
                    best = (d, i);
                }
            }
            survivor_predictions[best.1]
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointCounts {
    pub clouds: usize,
    /// Latest-scan points scored.
    pub scored: u64,
    /// Scored points predicted by the network directly.
    pub direct: u64,
    /// Scored points whose label was copied from a nearest neighbor.
    pub copied: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean_ms: f64,
    /// Population variance.
    pub variance_ms2: f64,
    pub warmup: usize,
    pub samples_ms: Vec<f64>,
    /// Points fed to the network, per timed cloud.
    pub processed_points: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: Confusion,
    pub metrics: Metrics,
    pub mean_f1: f64,
    pub points: PointCounts,
    /// Every latest-scan point received a direct prediction.
    pub latest_scan_coverage: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl EvalReport {
    pub fn from_confusion(confusion: Confusion, points: PointCounts) -> Self {
        let metrics = prf1(&confusion);
        EvalReport {
            confusion,
            mean_f1: metrics.mean_f1,
            metrics,
            latest_scan_coverage: points.copied == 0,
            points,
            timing: None,
        }
    }
}

fn xy(m: &Array2<f64>) -> Array2<f64> {
    m.slice(s![.., COL_X..=COL_Y]).to_owned()
}

/// Predictions for the latest-scan points of one cloud: `(truths, preds,
/// copied)`, direct predictions first.
pub fn predict_latest(model: &Model, cloud: &PreparedCloud) -> Result<(Vec<usize>, Vec<usize>, usize)> {
    let logits = model.infer(&cloud.features)?;
    let preds = argmax_rows(logits.view());
    let mask = cloud.eval_mask();
    let mut truths = Vec::new();
    let mut out = Vec::new();
    for i in 0..cloud.len() {
        if mask[i] {
            truths.push(cloud.labels[i]);
            out.push(preds[i]);
        }
    }
    let copied = cloud.removed_labels.len();
    if copied > 0 {
        let z = model.standardizer.apply(&cloud.features)?;
        let keep: Vec<usize> = (0..cloud.len()).filter(|&i| !cloud.is_replica[i]).collect();
        let survivors = xy(&z).select(ndarray::Axis(0), &keep);
        let survivor_preds: Vec<usize> = keep.iter().map(|&i| preds[i]).collect();
        let removed = xy(&model.standardizer.apply(&cloud.removed)?);
        out.extend(nn_postprocess(survivors.view(), &survivor_preds, removed.view())?);
        truths.extend_from_slice(&cloud.removed_labels);
    }
    Ok((truths, out, copied))
}

/// Scores every latest-scan point of every cloud.
pub fn evaluate_clouds(model: &Model, clouds: &[PreparedCloud]) -> Result<EvalReport> {
    let mut total = Confusion::default();
    let mut points = PointCounts {
        clouds: clouds.len(),
        ..PointCounts::default()
    };
    for c in clouds {
        let (truths, preds, copied) = predict_latest(model, c)?;
        total.add(&confusion(&preds, &truths, &vec![true; truths.len()])?);
        points.scored += truths.len() as u64;
        points.copied += copied as u64;
        points.direct += (truths.len() - copied) as u64;
    }
    Ok(EvalReport::from_confusion(total, points))
}

/// Mean and population variance.
pub fn mean_variance(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Times cloud preparation (resampling) plus one forward pass per cloud,
/// single-threaded. The first `warmup` clouds run but are not recorded.
pub fn bench<I>(model: &Model, stream: I, warmup: usize) -> Result<Timing>
where
    I: IntoIterator<Item = Result<PreparedCloud>>,
{
    let mut samples_ms = Vec::new();
    let mut processed_points = Vec::new();
    let mut it = stream.into_iter();
    let mut seen = 0usize;
    loop {
        let start = Instant::now();
        let Some(cloud) = it.next() else { break };
        let cloud = cloud?;
        let logits = model.infer(&cloud.features)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(&logits);
        if seen >= warmup {
            samples_ms.push(elapsed);
            processed_points.push(cloud.len());
        }
        seen += 1;
    }
    let (mean_ms, variance_ms2) = mean_variance(&samples_ms);
    Ok(Timing {
        mean_ms,
        variance_ms2,
        warmup,
        samples_ms,
        processed_points,
    })
}
