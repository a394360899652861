//! From labeled recordings to fixed-size training and evaluation clouds.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::accum::{
    accumulate, downsample_indices, upsample, window_range, AccumConfig, CloudPoint, StreamAccumulator, Strategy,
};
use crate::error::{Error, Result};
use crate::features::assemble;
use crate::types::Recording;

/// One network input plus everything needed to score it.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedCloud {
    /// Raw (unstandardized) features of the processed points, replicas
    /// included.
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub is_replica: Vec<bool>,
    pub is_latest: Vec<bool>,
    /// Latest-scan points removed by downsampling, with their labels.
    pub removed: Array2<f64>,
    pub removed_labels: Vec<usize>,
    pub recording: usize,
    pub scan_id: u64,
}

impl PreparedCloud {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Loss-eligible points: everything except replicas.
    pub fn loss_mask(&self) -> Vec<bool> {
        self.is_replica.iter().map(|r| !r).collect()
    }

    /// Scored points: latest scan, no replicas.
    pub fn eval_mask(&self) -> Vec<bool> {
        self.is_latest.iter().zip(&self.is_replica).map(|(l, r)| *l && !r).collect()
    }
}

/// How clouds were built for a model; stored with checkpoints so evaluation
/// can rebuild identical inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub accum: AccumConfig,
    /// Seed of the resampling and padding draws.
    pub seed: u64,
}

/// SplitMix64 finalizer; decorrelates seeds derived from small integers.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn labels_of(points: &[CloudPoint]) -> Result<Vec<usize>> {
    points
        .iter()
        .map(|p| {
            p.detection.label.class_index().ok_or_else(|| {
                Error::Data(format!("scan {}: detection {} is unlabeled", p.scan_id, p.index))
            })
        })
        .collect()
}

/// Yields one prepared cloud per non-empty scan of a recording, in time
/// order, each scan acting as the latest one.
pub struct CloudStream<'a> {
    recording: &'a Recording,
    recording_index: usize,
    config: AccumConfig,
    seed: u64,
    next: usize,
    queue: Option<StreamAccumulator>,
}

impl<'a> CloudStream<'a> {
    pub fn new(recording: &'a Recording, recording_index: usize, config: AccumConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let queue = (config.strategy == Strategy::FixedQueue)
            .then(|| StreamAccumulator::new(config.target_points, config.window_us(), recording.mounts.clone()));
        Ok(CloudStream {
            recording,
            recording_index,
            config,
            seed,
            next: 0,
            queue,
        })
    }

    fn cloud_at(&mut self, i: usize) -> Result<Option<PreparedCloud>> {
        let scans = &self.recording.scans;
        let latest = &scans[i];
        let cloud_seed = derive_seed(self.seed, self.recording_index as u64, i as u64);
        let (kept, removed): (Vec<CloudPoint>, Vec<CloudPoint>) = match &mut self.queue {
            Some(queue) => {
                queue.push_scan(latest)?;
                let kept = queue.snapshot()?;
                let mut present = vec![false; latest.detections.len()];
                for p in kept.iter().filter(|p| p.is_latest()) {
                    present[p.index] = true;
                }
                let all = accumulate(&[], latest, &self.recording.mounts)?;
                let removed = all.into_iter().filter(|p| !present[p.index]).collect();
                (kept, removed)
            }
            None => {
                let range = window_range(scans, i, self.config.window_us());
                let older = &scans[range.start..i];
                let cloud = accumulate(older, latest, &self.recording.mounts)?;
                if cloud.is_empty() {
                    return Ok(None);
                }
                let idx = downsample_indices(&cloud, self.config.target_points, self.config.strategy, cloud_seed)?;
                let mut keep = vec![false; cloud.len()];
                for &k in &idx {
                    keep[k] = true;
                }
                let mut kept = Vec::with_capacity(idx.len());
                let mut removed = Vec::new();
                for (p, k) in cloud.into_iter().zip(keep) {
                    if k {
                        kept.push(p);
                    } else if p.is_latest() {
                        removed.push(p);
                    }
                }
                (kept, removed)
            }
        };
        if kept.is_empty() {
            return Ok(None);
        }
        let points = upsample(kept, self.config.target_points, cloud_seed ^ 0x5EED)?;
        Ok(Some(PreparedCloud {
            features: assemble(&points)?,
            labels: labels_of(&points)?,
            is_replica: points.iter().map(|p| p.is_replica).collect(),
            is_latest: points.iter().map(CloudPoint::is_latest).collect(),
            removed: assemble(&removed)?,
            removed_labels: labels_of(&removed)?,
            recording: self.recording_index,
            scan_id: latest.scan_id,
        }))
    }
}

impl Iterator for CloudStream<'_> {
    type Item = Result<PreparedCloud>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.next < self.recording.scans.len() {
            let i = self.next;
            self.next += 1;
            match self.cloud_at(i) {
                Ok(None) => continue,
                Ok(Some(c)) => return Some(Ok(c)),
                Err(e) => return Some(Err(e)),
            }
        }
        None
    }
}

/// Prepared clouds of all recordings; `recording` indexes into `recordings`.
pub fn prepare_clouds(recordings: &[Recording], config: AccumConfig, seed: u64) -> Result<Vec<PreparedCloud>> {
    let mut out = Vec::new();
    for (r, rec) in recordings.iter().enumerate() {
        for c in CloudStream::new(rec, r, config, seed)? {
            out.push(c?);
        }
    }
    Ok(out)
}
