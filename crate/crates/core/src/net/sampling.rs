//! Farthest point sampling, ball grouping and interpolation weights.
//!
//! All of these depend on positions only, so a [`SamplingPlan`] is built once
//! per cloud and reused by forward and backward passes. Ties are broken by a
//! rank per point: the input index, or the lexicographic position order when
//! the plan is canonical.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::NetworkConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FpsStart {
    /// Uniformly drawn first point; ties by input index.
    Seeded(u64),
    /// Lexicographically smallest position first; all ties by position.
    Canonical,
}

fn dist2(a: ArrayView2<f64>, i: usize, b: ArrayView2<f64>, j: usize) -> f64 {
    let dx = a[[i, 0]] - b[[j, 0]];
    let dy = a[[i, 1]] - b[[j, 1]];
    dx * dx + dy * dy
}

/// `rank[i]` is the position of point `i` in (x, y, index) order.
pub fn canonical_rank(points: ArrayView2<f64>) -> Vec<usize> {
    let n = points.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[[a, 0]]
            .total_cmp(&points[[b, 0]])
            .then(points[[a, 1]].total_cmp(&points[[b, 1]]))
            .then(a.cmp(&b))
    });
    let mut rank = vec![0; n];
    for (r, i) in order.into_iter().enumerate() {
        rank[i] = r;
    }
    rank
}

fn identity_rank(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn check_points(points: ArrayView2<f64>) -> Result<()> {
    if points.ncols() != 2 {
        return Err(Error::Contract(format!("positions must be N x 2, got {} columns", points.ncols())));
    }
    Ok(())
}

/// Greedy farthest point sampling from a seeded uniform start.
pub fn farthest_point_sample(points: ArrayView2<f64>, m: usize, seed: u64) -> Result<Vec<usize>> {
    fps(points, m, FpsStart::Seeded(seed), &identity_rank(points.nrows()))
}

fn fps(points: ArrayView2<f64>, m: usize, start: FpsStart, rank: &[usize]) -> Result<Vec<usize>> {
    check_points(points)?;
    let n = points.nrows();
    if m > n {
        return Err(Error::Contract(format!("cannot sample {m} of {n} points")));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let first = match start {
        FpsStart::Seeded(seed) => ChaCha8Rng::seed_from_u64(seed).random_range(0..n),
        FpsStart::Canonical => rank.iter().position(|&r| r == 0).expect("rank is a permutation"),
    };
    let mut chosen = Vec::with_capacity(m);
    let mut best = vec![f64::INFINITY; n];
    let mut next = first;
    for _ in 0..m {
        chosen.push(next);
        best[next] = -1.0;
        let mut arg = usize::MAX;
        let mut arg_d = -1.0;
        for i in 0..n {
            if best[i] < 0.0 {
                continue;
            }
            let d = dist2(points, i, points, next);
            if d < best[i] {
                best[i] = d;
            }
            if best[i] > arg_d || (best[i] == arg_d && rank[i] < rank[arg]) {
                arg = i;
                arg_d = best[i];
            }
        }
        next = arg;
    }
    Ok(chosen)
}

/// Ball-query result: `indices[c * k..(c + 1) * k]` is the group of center `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct BallGroups {
    pub k: usize,
    pub indices: Vec<usize>,
    /// Set when no point lies within the radius and the group holds the
    /// nearest point instead.
    pub degenerate: Vec<bool>,
}

impl BallGroups {
    pub fn group(&self, c: usize) -> &[usize] {
        &self.indices[c * self.k..(c + 1) * self.k]
    }
}

/// Up to `k` nearest in-radius points per center, padded with the nearest.
pub fn ball_query(points: ArrayView2<f64>, centers: ArrayView2<f64>, radius: f64, k: usize) -> Result<BallGroups> {
    ball_query_ranked(points, centers, radius, k, &identity_rank(points.nrows()))
}

fn ball_query_ranked(
    points: ArrayView2<f64>,
    centers: ArrayView2<f64>,
    radius: f64,
    k: usize,
    rank: &[usize],
) -> Result<BallGroups> {
    check_points(points)?;
    check_points(centers)?;
    if !(radius > 0.0) || k == 0 {
        return Err(Error::Contract(format!("ball query needs radius > 0 and k >= 1 (radius {radius}, k {k})")));
    }
    if points.nrows() == 0 {
        return Err(Error::Contract("ball query on an empty point set".into()));
    }
    let r2 = radius * radius;
    let mut indices = Vec::with_capacity(centers.nrows() * k);
    let mut degenerate = Vec::with_capacity(centers.nrows());
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for c in 0..centers.nrows() {
        cand.clear();
        let mut nearest = (f64::INFINITY, usize::MAX, 0);
        for (i, &r) in rank.iter().enumerate().take(points.nrows()) {
            let d = dist2(points, i, centers, c);
            let key = (d, r, i);
            if d <= r2 {
                cand.push(key);
            }
            if (key.0, key.1) < (nearest.0, nearest.1) {
                nearest = key;
            }
        }
        if cand.is_empty() {
            degenerate.push(true);
            indices.extend(std::iter::repeat_n(nearest.2, k));
            continue;
        }
        degenerate.push(false);
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let take = cand.len().min(k);
        indices.extend(cand[..take].iter().map(|c| c.2));
        indices.extend(std::iter::repeat_n(cand[0].2, k - take));
    }
    Ok(BallGroups { k, indices, degenerate })
}

/// Inverse-squared-distance interpolation weights from coarse to fine points.
#[derive(Clone, Debug, PartialEq)]
pub struct Interpolation {
    pub k: usize,
    /// `indices[f * k..(f + 1) * k]` are coarse indices for fine point `f`.
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Weights `1/d^2` over the `k` nearest coarse points, normalized; a coarse
/// point at distance 0 takes the whole weight.
pub fn interpolation_weights(coarse: ArrayView2<f64>, fine: ArrayView2<f64>, k: usize) -> Result<Interpolation> {
    interpolation_ranked(coarse, fine, k, &identity_rank(coarse.nrows()))
}

fn interpolation_ranked(coarse: ArrayView2<f64>, fine: ArrayView2<f64>, k: usize, rank: &[usize]) -> Result<Interpolation> {
    check_points(coarse)?;
    check_points(fine)?;
    if coarse.nrows() == 0 || k == 0 {
        return Err(Error::Contract("interpolation needs at least one coarse point and k >= 1".into()));
    }
    let k = k.min(coarse.nrows());
    let mut indices = Vec::with_capacity(fine.nrows() * k);
    let mut weights = Vec::with_capacity(fine.nrows() * k);
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(coarse.nrows());
    for f in 0..fine.nrows() {
        cand.clear();
        cand.extend((0..coarse.nrows()).map(|c| (dist2(coarse, c, fine, f), rank[c], c)));
        cand.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let near = &mut cand[..k];
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        indices.extend(near.iter().map(|c| c.2));
        if near[0].0 == 0.0 {
            weights.push(1.0);
            weights.extend(std::iter::repeat_n(0.0, k - 1));
        } else {
            let total: f64 = near.iter().map(|c| 1.0 / c.0).sum();
            weights.extend(near.iter().map(|c| (1.0 / c.0) / total));
        }
    }
    Ok(Interpolation { k, indices, weights })
}

/// Sampling decisions of one set-abstraction level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelPlan {
    /// Indices into the previous level's points.
    pub centers: Vec<usize>,
    /// One grouping per radius.
    pub groups: Vec<BallGroups>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPlan {
    /// `positions[0]` is the input; `positions[l]` belongs to level `l`.
    pub positions: Vec<Array2<f64>>,
    pub levels: Vec<LevelPlan>,
    /// Propagation order: level 3 to 2, 2 to 1, 1 to input.
    pub interp: Vec<Interpolation>,
}

impl SamplingPlan {
    pub fn input_points(&self) -> usize {
        self.positions[0].nrows()
    }
}

/// Plans all levels for standardized `positions`. Radii in the config are
/// meters and are divided by `xy_scale`. Sample counts larger than the
/// available points are clamped.
pub fn build_plan(config: &NetworkConfig, positions: ArrayView2<f64>, xy_scale: f64, start: FpsStart) -> Result<SamplingPlan> {
    check_points(positions)?;
    if positions.nrows() == 0 {
        return Err(Error::Contract("cannot plan an empty cloud".into()));
    }
    let mut all_pos = vec![positions.to_owned()];
    let mut levels = Vec::with_capacity(config.sa.len());
    for (l, level) in config.sa.iter().enumerate() {
        let prev = all_pos[l].view();
        let rank = match start {
            FpsStart::Canonical => canonical_rank(prev),
            FpsStart::Seeded(_) => identity_rank(prev.nrows()),
        };
        let m = level.samples.min(prev.nrows());
        let level_start = match start {
            FpsStart::Seeded(seed) => FpsStart::Seeded(seed.wrapping_add(l as u64)),
            FpsStart::Canonical => FpsStart::Canonical,
        };
        let centers = fps(prev, m, level_start, &rank)?;
        let center_pos = prev.select(Axis(0), &centers);
        let groups = level
            .radii
            .iter()
            .map(|r| ball_query_ranked(prev, center_pos.view(), r / xy_scale, config.group_cap, &rank))
            .collect::<Result<Vec<_>>>()?;
        levels.push(LevelPlan { centers, groups });
        all_pos.push(center_pos);
    }
    let mut interp = Vec::with_capacity(config.fp.len());
    for l in (0..config.sa.len()).rev() {
        let coarse = all_pos[l + 1].view();
        let rank = match start {
            FpsStart::Canonical => canonical_rank(coarse),
            FpsStart::Seeded(_) => identity_rank(coarse.nrows()),
        };
        interp.push(interpolation_ranked(coarse, all_pos[l].view(), config.fp_k, &rank)?);
    }
    Ok(SamplingPlan {
        positions: all_pos,
        levels,
        interp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn fps_collinear_example() {
        let p = array![[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]];
        let rank = identity_rank(3);
        let start0 = fps(p.view(), 2, FpsStart::Canonical, &rank).unwrap();
        assert_eq!(start0, [0, 2]);
        let all = farthest_point_sample(p.view(), 3, 5).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, [0, 1, 2]);
        assert!(farthest_point_sample(p.view(), 4, 0).is_err());
    }

    #[test]
    fn fps_is_deterministic() {
        let p = Array2::from_shape_fn((50, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        assert_eq!(farthest_point_sample(p.view(), 20, 3).unwrap(), farthest_point_sample(p.view(), 20, 3).unwrap());
    }

    #[test]
    fn ball_query_examples() {
        let p = array![[0.0, 0.0], [0.5, 0.0], [0.2, 0.0], [0.9, 0.0], [0.7, 0.0], [5.0, 0.0]];
        let c = array![[0.0, 0.0]];
        let g = ball_query(p.view(), c.view(), 1.0, 3).unwrap();
        assert_eq!(g.group(0), [0, 2, 1]);
        let g = ball_query(p.view(), array![[5.0, 0.1]].view(), 1.0, 4).unwrap();
        assert_eq!(g.group(0), [5, 5, 5, 5]);
        assert!(!g.degenerate[0]);
        let g = ball_query(p.view(), array![[20.0, 0.0]].view(), 1.0, 2).unwrap();
        assert_eq!(g.group(0), [5, 5]);
        assert!(g.degenerate[0]);
    }

    #[test]
    fn interpolation_examples() {
        let coarse = array![[1.0, 0.0], [-2.0, 0.0], [0.0, 2.0], [9.0, 9.0]];
        let fine = array![[0.0, 0.0], [-2.0, 0.0]];
        let it = interpolation_weights(coarse.view(), fine.view(), 3).unwrap();
        assert_eq!(&it.indices[..3], [0, 1, 2]);
        let expect = [4.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
        for (w, e) in it.weights[..3].iter().zip(expect) {
            assert!((w - e).abs() < 1e-15);
        }
        assert_eq!(it.indices[3], 1);
        assert_eq!(&it.weights[3..], [1.0, 0.0, 0.0]);
        let two = interpolation_weights(array![[1.0, 0.0], [-1.0, 0.0]].view(), array![[0.0, 0.0]].view(), 3).unwrap();
        assert_eq!(two.k, 2);
        assert_eq!(two.weights, [0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn fps_prefers_distinct_positions(
            pts in prop::collection::vec((0i32..6, 0i32..6), 2..30), seed: u64
        ) {
            let n = pts.len();
            let mut p = Array2::zeros((n * 2, 2));
            for (i, (x, y)) in pts.iter().enumerate() {
                for copy in [i, n + i] {
                    p[[copy, 0]] = *x as f64;
                    p[[copy, 1]] = *y as f64;
                }
            }
            let mut distinct = pts.clone();
            distinct.sort();
            distinct.dedup();
            let idx = farthest_point_sample(p.view(), distinct.len(), seed).unwrap();
            let mut seen: Vec<(i32, i32)> = idx.iter().map(|&i| (p[[i, 0]] as i32, p[[i, 1]] as i32)).collect();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), distinct.len());
        }

        #[test]
        fn ball_groups_are_nearest_in_radius(
            pts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..40),
            cx in -5.0..5.0f64, cy in -5.0..5.0f64, r in 0.1..4.0f64, k in 1usize..10
        ) {
            let p = Array2::from_shape_fn((pts.len(), 2), |(i, j)| if j == 0 { pts[i].0 } else { pts[i].1 });
            let c = array![[cx, cy]];
            let g = ball_query(p.view(), c.view(), r, k).unwrap();
            let d = |i: usize| (p[[i, 0]] - cx).powi(2) + (p[[i, 1]] - cy).powi(2);
            let mut inside: Vec<usize> = (0..pts.len()).filter(|&i| d(i) <= r * r).collect();
            inside.sort_by(|&a, &b| d(a).total_cmp(&d(b)).then(a.cmp(&b)));
            if inside.is_empty() {
                prop_assert!(g.degenerate[0]);
            } else {
                let take = inside.len().min(k);
                prop_assert_eq!(&g.group(0)[..take], &inside[..take]);
                prop_assert!(g.group(0)[take..].iter().all(|&i| i == inside[0]));
            }
        }
    }
}
