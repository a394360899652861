use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::queue::{queue_push_scan, FixedQueue, PushKey};
use super::{CloudPoint, Strategy};
use crate::error::{Error, Result};

struct Keyed<'a> {
    index: usize,
    point: &'a CloudPoint,
}

impl PushKey for Keyed<'_> {
    fn v_comp(&self) -> f64 {
        self.point.detection.v_comp
    }
    fn rcs(&self) -> f64 {
        self.point.detection.rcs
    }
}

/// Ascending indices of the points kept by `strategy`.
///
/// Every strategy except [`Strategy::None`] keeps exactly
/// `min(cloud.len(), target_points)` points.
pub fn downsample_indices(
    cloud: &[CloudPoint],
    target_points: usize,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = cloud.len();
    if n == 0 {
        return Err(Error::Data("downsample: empty cloud".into()));
    }
    if n <= target_points || strategy == Strategy::None {
        return Ok((0..n).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = match strategy {
        Strategy::None => unreachable!(),
        Strategy::Random | Strategy::NnPostprocessBaseline => {
            sample(&mut rng, n, target_points).into_vec()
        }
        Strategy::LowestRcs => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| cloud[a].detection.rcs.total_cmp(&cloud[b].detection.rcs));
            idx.split_off(n - target_points)
        }
        Strategy::OldOnlyRandom => {
            let old: Vec<usize> = (0..n).filter(|&i| !cloud[i].is_latest()).collect();
            let removals = n - target_points;
            if old.len() < removals {
                return Err(Error::Infeasible(format!(
                    "old-only-random: {removals} removals needed but only {} old points \
                     ({} latest-scan points exceed the target of {target_points})",
                    old.len(),
                    n - old.len()
                )));
            }
            let mut drop = vec![false; n];
            for k in sample(&mut rng, old.len(), removals) {
                drop[old[k]] = true;
            }
            (0..n).filter(|&i| !drop[i]).collect()
        }
        Strategy::FixedQueue => {
            let mut scans: Vec<(f64, u64, Vec<Keyed>)> = Vec::new();
            for (index, point) in cloud.iter().enumerate() {
                match scans.iter_mut().find(|s| s.1 == point.scan_id && s.0 == point.dt) {
                    Some(s) => s.2.push(Keyed { index, point }),
                    None => scans.push((point.dt, point.scan_id, vec![Keyed { index, point }])),
                }
            }
            scans.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut queue = FixedQueue::new(target_points);
            for (_, _, pts) in scans {
                queue_push_scan(&mut queue, pts);
            }
            queue.iter().map(|k| k.index).collect()
        }
    };
    kept.sort_unstable();
    Ok(kept)
}

/// Keeps the points selected by [`downsample_indices`], in input order.
pub fn downsample(
    cloud: &[CloudPoint],
    target_points: usize,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<CloudPoint>> {
    Ok(downsample_indices(cloud, target_points, strategy, seed)?
        .into_iter()
        .map(|i| cloud[i].clone())
        .collect())
}

/// Pads the cloud to `target_points` with replicas of uniformly chosen
/// original points. Clouds already at or above the target are unchanged.
pub fn upsample(mut cloud: Vec<CloudPoint>, target_points: usize, seed: u64) -> Result<Vec<CloudPoint>> {
    let n = cloud.len();
    if n == 0 {
        return Err(Error::Data("upsample: empty cloud".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while cloud.len() < target_points {
        let mut copy = cloud[rng.random_range(0..n)].clone();
        copy.is_replica = true;
        cloud.push(copy);
    }
    Ok(cloud)
}
