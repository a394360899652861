use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Map;

use super::config::{CountRange, NoiseModel, ObjectSpec, RcsSpec, Reflector, ScenarioConfig};
use super::ghosts::{ambiguity_ghost, mirror_ghost, AliasMode};
use crate::error::Result;
use crate::geometry::{line_of_sight, sensor_velocity, to_sensor_frame, to_vehicle_frame};
use crate::types::{
    Annotation, Detection, EgoState, Pose2, Recording, Scan, SensorMount, TrueSource, Vec2,
};

/// Maximum polar offset of a spill return from its anchor scatterer.
const SPILL_RANGE_M: f64 = 0.1;
const SPILL_AZIMUTH_DEG: f64 = 0.3;
/// Scatterers are placed this far inside the box outline.
const SCATTER_INSET_M: f64 = 0.02;

/// Noise-free bookkeeping for one emitted detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionTruth {
    /// Vehicle-frame position at scan time.
    pub position: Vec2,
    pub range: f64,
    pub azimuth_deg: f64,
    pub v_comp: f64,
    /// Index into [`Generated::objects`] for object returns.
    pub object: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub recording: Recording,
    /// `truth[i][j]` describes `recording.scans[i].detections[j]`.
    pub truth: Vec<Vec<DetectionTruth>>,
    /// Explicit objects followed by spawned traffic.
    pub objects: Vec<ObjectSpec>,
}

/// Generates a recording; deterministic in `config.seed`.
pub fn generate_recording(config: &ScenarioConfig) -> Result<Recording> {
    Ok(generate_recording_with_truth(config)?.recording)
}

pub fn generate_recording_with_truth(config: &ScenarioConfig) -> Result<Generated> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut objects = config.objects.clone();
    spawn_traffic(config, &mut rng, &mut objects);

    let interval_us = (config.scan_interval * 1e6).round() as i64;
    let duration_us = (config.duration * 1e6).round() as i64;
    let n = config.mounts.len() as i64;
    let mut schedule = Vec::new();
    'outer: for k in 0.. {
        for j in 0..n {
            let t = k * interval_us + j * interval_us / n;
            if t >= duration_us {
                if j == 0 {
                    break 'outer;
                }
                continue;
            }
            schedule.push((t, j as usize));
        }
    }

    let mut scans = Vec::with_capacity(schedule.len());
    let mut truth = Vec::with_capacity(schedule.len());
    for (scan_id, &(t_us, j)) in schedule.iter().enumerate() {
        let mount = &config.mounts[j];
        let ego = ego_state_at(config, t_us);
        let mut gen = ScanGen {
            config,
            mount,
            ego,
            objects: &objects,
            rng: &mut rng,
        };
        let (dets, tr) = gen.run();
        scans.push(Scan {
            scan_id: scan_id as u64,
            sensor_id: mount.sensor_id,
            timestamp_us: t_us,
            ego,
            detections: dets,
            extra: Map::new(),
        });
        truth.push(tr);
    }
    Ok(Generated {
        recording: Recording {
            mounts: config.mounts.clone(),
            scans,
        },
        truth,
        objects,
    })
}

fn class_extent(class: &str) -> (f64, f64) {
    match class {
        "truck" => (10.0, 2.5),
        "bus" => (12.0, 2.6),
        "pedestrian" => (0.6, 0.6),
        "bicycle" => (1.8, 0.6),
        "motorbike" => (2.2, 0.8),
        _ => (4.5, 1.8),
    }
}

fn draw_count(rng: &mut ChaCha8Rng, c: CountRange) -> usize {
    rng.random_range(c.min..=c.max)
}

fn spawn_traffic(config: &ScenarioConfig, rng: &mut ChaCha8Rng, objects: &mut Vec<ObjectSpec>) {
    let Some(t) = &config.traffic else { return };
    let count = draw_count(rng, t.count);
    for _ in 0..count {
        let class = t.classes[rng.random_range(0..t.classes.len())].clone();
        let (length, width) = class_extent(&class);
        let x = uniform(rng, t.x.min, t.x.max);
        let y = uniform(rng, t.y.min, t.y.max);
        let speed = uniform(rng, t.speed.min, t.speed.max);
        let heading = if rng.random::<f64>() < t.crossing_prob {
            uniform(rng, -std::f64::consts::PI, std::f64::consts::PI)
        } else if rng.random::<bool>() {
            0.0
        } else {
            std::f64::consts::PI
        };
        let v = Vec2::from_polar(speed, heading);
        objects.push(ObjectSpec {
            class,
            x,
            y,
            vx: v.x,
            vy: v.y,
            length,
            width,
            heading_deg: heading.to_degrees(),
            detections: t.detections,
            spill_prob: t.spill_prob,
        });
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Exact unicycle integration of the piecewise-constant ego trajectory.
fn ego_state_at(config: &ScenarioConfig, t_us: i64) -> EgoState {
    let mut pose = Pose2::default();
    let (mut speed, mut yaw_rate) = (0.0, 0.0);
    let mut remaining = t_us as f64 * 1e-6;
    let last = config.ego.len().saturating_sub(1);
    for (i, seg) in config.ego.iter().enumerate() {
        let dt = if i == last {
            remaining
        } else {
            remaining.min(seg.duration)
        };
        pose = advance(pose, seg.speed, seg.yaw_rate, dt);
        speed = seg.speed;
        yaw_rate = seg.yaw_rate;
        remaining -= dt;
        if remaining <= 0.0 {
            break;
        }
    }
    EgoState {
        pose,
        speed,
        yaw_rate,
        timestamp_us: t_us,
    }
}

fn advance(p: Pose2, v: f64, w: f64, dt: f64) -> Pose2 {
    if w.abs() < 1e-12 {
        Pose2::new(p.x + v * dt * p.yaw.cos(), p.y + v * dt * p.yaw.sin(), p.yaw)
    } else {
        let yaw = p.yaw + w * dt;
        Pose2::new(
            p.x + v / w * (yaw.sin() - p.yaw.sin()),
            p.y + v / w * (p.yaw.cos() - yaw.cos()),
            yaw,
        )
    }
}

fn in_box(p: Vec2, center: Vec2, heading: f64, length: f64, width: f64) -> bool {
    let local = (p - center).rotate(-heading);
    local.x.abs() <= length / 2.0 && local.y.abs() <= width / 2.0
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Moving,
    Clutter,
    Stationary,
}

struct Candidate {
    det: Detection,
    truth: DetectionTruth,
    kind: Kind,
}

struct ScanGen<'a> {
    config: &'a ScenarioConfig,
    mount: &'a SensorMount,
    ego: EgoState,
    objects: &'a [ObjectSpec],
    rng: &'a mut ChaCha8Rng,
}

impl ScanGen<'_> {
    fn noise(&mut self, sigma: f64) -> f64 {
        let clip = self.config.noise.clip_sigmas;
        let z = loop {
            let z: f64 = self.rng.sample(StandardNormal);
            if clip.is_none_or(|c| z.abs() <= c) {
                break z;
            }
        };
        sigma * z
    }

    fn rcs(&mut self, spec: RcsSpec) -> f64 {
        spec.mean + self.noise_unclipped(spec.std)
    }

    fn noise_unclipped(&mut self, sigma: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        sigma * z
    }

    /// Applies measurement noise to a noise-free return; `None` if the
    /// measured return leaves the sensor bounds.
    fn measure(
        &mut self,
        truth: DetectionTruth,
        v_rel_true: f64,
        rcs: RcsSpec,
        annotation: Annotation,
        source: TrueSource,
    ) -> Option<Candidate> {
        let nm: NoiseModel = self.config.noise;
        let range = truth.range + self.noise(nm.sigma_range);
        let azimuth = truth.azimuth_deg + self.noise(nm.azimuth_sigma_at(truth.azimuth_deg));
        let nv = self.noise(nm.sigma_v);
        let comp = nm.comp_error_bound * (2.0 * self.rng.random::<f64>() - 1.0);
        let rcs = self.rcs(rcs);
        if !self.mount.contains(range, azimuth) {
            return None;
        }
        let det = Detection::new(range, azimuth, v_rel_true + nv, truth.v_comp + nv + comp, rcs)
            .with_annotation(annotation)
            .with_source(source);
        let kind = match source {
            TrueSource::RealMoving => Kind::Moving,
            TrueSource::RealStationary => Kind::Stationary,
            _ => Kind::Clutter,
        };
        Some(Candidate { det, truth, kind })
    }

    fn truth_at(&self, p: Vec2, ground_vel: Vec2, object: Option<usize>) -> Option<(DetectionTruth, f64)> {
        let (range, azimuth_deg) = to_sensor_frame(p, self.mount);
        if !self.mount.contains(range, azimuth_deg) {
            return None;
        }
        let u = line_of_sight(p, self.mount).ok()?;
        let v_comp = ground_vel.dot(u);
        let v_rel = v_comp - sensor_velocity(&self.ego, self.mount).dot(u);
        Some((
            DetectionTruth {
                position: p,
                range,
                azimuth_deg,
                v_comp,
                object,
            },
            v_rel,
        ))
    }

    fn object_state(&self, obj: &ObjectSpec) -> (Vec2, Vec2, f64) {
        let t = self.ego.timestamp_us as f64 * 1e-6;
        let world = Vec2::new(obj.x, obj.y) + obj.velocity().scale(t);
        let center = self.ego.pose.to_local(world);
        let vel = obj.velocity().rotate(-self.ego.pose.yaw);
        (center, vel, obj.heading_rad() - self.ego.pose.yaw)
    }

    fn object_returns(&mut self, out: &mut Vec<Candidate>) {
        let rcs_spec = self.config.rcs.moving;
        for (oi, obj) in self.objects.iter().enumerate() {
            let (center, vel, heading) = self.object_state(obj);
            let (r, az) = to_sensor_frame(center, self.mount);
            if !self.mount.contains(r, az) {
                continue;
            }
            let count = draw_count(self.rng, obj.detections);
            let l = (obj.length - 2.0 * SCATTER_INSET_M).max(0.0);
            let w = (obj.width - 2.0 * SCATTER_INSET_M).max(0.0);
            for _ in 0..count {
                let s = self.rng.random::<f64>() * 2.0 * (l + w);
                let local = if s < l {
                    Vec2::new(s - l / 2.0, w / 2.0)
                } else if s < l + w {
                    Vec2::new(l / 2.0, w / 2.0 - (s - l))
                } else if s < 2.0 * l + w {
                    Vec2::new(l / 2.0 - (s - l - w), -w / 2.0)
                } else {
                    Vec2::new(-l / 2.0, -w / 2.0 + (s - 2.0 * l - w))
                };
                let p = center + local.rotate(heading);
                let spill_draw = self.rng.random::<f64>();
                let dr = SPILL_RANGE_M * (2.0 * self.rng.random::<f64>() - 1.0);
                let daz = SPILL_AZIMUTH_DEG * (2.0 * self.rng.random::<f64>() - 1.0);
                let Some((truth, v_rel)) = self.truth_at(p, vel, Some(oi)) else {
                    continue;
                };
                let tag = Annotation::Object(obj.class.clone());
                let Some(anchor) =
                    self.measure(truth, v_rel, rcs_spec, tag.clone(), TrueSource::RealMoving)
                else {
                    continue;
                };
                out.push(anchor);
                if spill_draw >= obj.spill_prob {
                    continue;
                }
                let (rs, azs) = (truth.range + dr, truth.azimuth_deg + daz);
                let Ok(ps) = to_vehicle_frame(rs, azs, self.mount) else {
                    continue;
                };
                let Some((st, sv)) = self.truth_at(ps, vel, Some(oi)) else {
                    continue;
                };
                let annotation = if in_box(ps, center, heading, obj.length, obj.width) {
                    tag
                } else {
                    Annotation::Background
                };
                if let Some(c) = self.measure(st, sv, rcs_spec, annotation, TrueSource::RealMoving) {
                    out.push(c);
                }
            }
        }
    }

    fn mirror_ghosts(&mut self, out: &mut Vec<Candidate>) {
        let rcs = self.config.rcs.mirror_ghost;
        for (oi, obj) in self.objects.iter().enumerate() {
            let (center, vel, _) = self.object_state(obj);
            for refl in &self.config.reflectors {
                let local = Reflector {
                    a: self.ego.pose.to_local(refl.a),
                    b: self.ego.pose.to_local(refl.b),
                    ..*refl
                };
                let Some(ghost) = mirror_ghost(center, vel, &local, self.mount, &self.ego) else {
                    continue;
                };
                if self.rng.random::<f64>() >= refl.reflectivity {
                    continue;
                }
                let position = to_vehicle_frame(ghost.range, ghost.azimuth_deg, self.mount)
                    .expect("ghost accepted inside bounds");
                let truth = DetectionTruth {
                    position,
                    range: ghost.range,
                    azimuth_deg: ghost.azimuth_deg,
                    v_comp: ghost.v_comp,
                    object: Some(oi),
                };
                if let Some(c) = self.measure(
                    truth,
                    ghost.v_rel,
                    rcs,
                    Annotation::Background,
                    TrueSource::MirrorGhost,
                ) {
                    out.push(c);
                }
            }
        }
    }

    fn ambiguity_ghosts(&mut self, real: &[Candidate], out: &mut Vec<Candidate>) {
        let c = self.config.clutter;
        let rcs = self.config.rcs.ambiguity_ghost;
        let vs = sensor_velocity(&self.ego, self.mount);
        for cand in real {
            let mut modes = Vec::new();
            if self.rng.random::<f64>() < c.velocity_alias_prob {
                let fold = if self.rng.random::<bool>() { 1 } else { -1 };
                modes.push(AliasMode::Velocity {
                    span: c.velocity_span,
                    fold,
                });
            }
            if self.rng.random::<f64>() < c.angle_alias_prob {
                let sign = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
                modes.push(AliasMode::AngleOffset {
                    offset_deg: sign * c.angle_alias_offset_deg,
                });
            }
            for mode in modes {
                // The alias is applied to the noise-free return; the ghost then
                // receives its own measurement noise.
                let t = cand.truth;
                let Ok(u) = line_of_sight(t.position, self.mount) else {
                    continue;
                };
                let clean = Detection::new(t.range, t.azimuth_deg, t.v_comp - vs.dot(u), t.v_comp, 0.0);
                let Some(ghost) = ambiguity_ghost(&clean, mode, self.mount, &self.ego) else {
                    continue;
                };
                let Ok(position) = to_vehicle_frame(ghost.range, ghost.azimuth_deg, self.mount)
                else {
                    continue;
                };
                let truth = DetectionTruth {
                    position,
                    range: ghost.range,
                    azimuth_deg: ghost.azimuth_deg,
                    v_comp: ghost.v_comp,
                    object: t.object,
                };
                if let Some(g) = self.measure(
                    truth,
                    ghost.v_rel,
                    rcs,
                    Annotation::Background,
                    TrueSource::AmbiguityGhost,
                ) {
                    out.push(g);
                }
            }
        }
    }

    fn random_in_fov(&mut self) -> Vec2 {
        let m = self.mount;
        let r = uniform(self.rng, self.config.stationary.min_range.min(m.max_range), m.max_range);
        let az = uniform(self.rng, -m.fov_half_angle_deg, m.fov_half_angle_deg);
        to_vehicle_frame(r, az, m).expect("sampled inside bounds")
    }

    fn noise_returns(&mut self, out: &mut Vec<Candidate>) {
        let c = self.config.clutter;
        let count = draw_count(self.rng, c.noise_per_scan);
        for _ in 0..count {
            let p = self.random_in_fov();
            let speed = uniform(self.rng, c.noise_speed.min, c.noise_speed.max);
            let sign = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
            let rcs = self.rcs(self.config.rcs.noise);
            let (range, azimuth_deg) = to_sensor_frame(p, self.mount);
            let Ok(u) = line_of_sight(p, self.mount) else { continue };
            let v_comp = sign * speed;
            let v_rel = v_comp - sensor_velocity(&self.ego, self.mount).dot(u);
            if !self.mount.contains(range, azimuth_deg) {
                continue;
            }
            let det = Detection::new(range, azimuth_deg, v_rel, v_comp, rcs)
                .with_annotation(Annotation::Background)
                .with_source(TrueSource::Noise);
            out.push(Candidate {
                det,
                truth: DetectionTruth {
                    position: p,
                    range,
                    azimuth_deg,
                    v_comp,
                    object: None,
                },
                kind: Kind::Clutter,
            });
        }
    }

    fn stationary_return(&mut self, p: Vec2) -> Option<Candidate> {
        let (truth, v_rel) = self.truth_at(p, Vec2::ZERO, None)?;
        self.measure(
            truth,
            v_rel,
            self.config.rcs.stationary,
            Annotation::Background,
            TrueSource::RealStationary,
        )
    }

    fn stationary_returns(&mut self, out: &mut Vec<Candidate>) {
        let count = draw_count(self.rng, self.config.stationary.per_scan);
        for _ in 0..count {
            let p = self.random_in_fov();
            if let Some(c) = self.stationary_return(p) {
                out.push(c);
            }
        }
        for refl in &self.config.reflectors {
            let a = self.ego.pose.to_local(refl.a);
            let b = self.ego.pose.to_local(refl.b);
            for _ in 0..refl.returns_per_scan {
                let t = self.rng.random::<f64>();
                if let Some(c) = self.stationary_return(a + (b - a).scale(t)) {
                    out.push(c);
                }
            }
        }
    }

    fn run(&mut self) -> (Vec<Detection>, Vec<DetectionTruth>) {
        let mut moving = Vec::new();
        self.object_returns(&mut moving);
        let mut stationary = Vec::new();
        self.stationary_returns(&mut stationary);

        let mut clutter = Vec::new();
        self.mirror_ghosts(&mut clutter);
        let mut real: Vec<Candidate> = Vec::new();
        real.extend(moving.iter().map(clone_candidate));
        real.extend(stationary.iter().map(clone_candidate));
        self.ambiguity_ghosts(&real, &mut clutter);
        self.noise_returns(&mut clutter);

        if let Some(g) = self.config.merge_guard {
            clutter.retain(|c| {
                !moving.iter().any(|m| {
                    (m.truth.range - c.truth.range).abs() <= g.range
                        && (m.truth.azimuth_deg - c.truth.azimuth_deg).abs() <= g.azimuth_deg
                })
            });
        }

        let bounds = self.config.detections_per_scan;
        let mut total = moving.len() + clutter.len() + stationary.len();
        if total > bounds.max {
            for pool in [&mut stationary, &mut clutter] {
                let excess = total - bounds.max;
                let drop = excess.min(pool.len());
                pool.shuffle(self.rng);
                pool.truncate(pool.len() - drop);
                total -= drop;
                if total <= bounds.max {
                    break;
                }
            }
            if total > bounds.max {
                drop_whole_objects(&mut moving, total - bounds.max);
            }
        }
        let mut attempts = 0;
        while moving.len() + clutter.len() + stationary.len() < bounds.min && attempts < 100_000 {
            attempts += 1;
            let p = self.random_in_fov();
            if let Some(c) = self.stationary_return(p) {
                stationary.push(c);
            }
        }

        let mut all: Vec<Candidate> = moving;
        all.append(&mut clutter);
        all.append(&mut stationary);
        all.shuffle(self.rng);
        all.into_iter().map(|c| (c.det, c.truth)).unzip()
    }
}

fn clone_candidate(c: &Candidate) -> Candidate {
    Candidate {
        det: c.det.clone(),
        truth: c.truth,
        kind: c.kind,
    }
}

/// Removes object returns object-by-object (highest index first) until at
/// least `excess` detections are gone, so no spill loses its anchor.
fn drop_whole_objects(moving: &mut Vec<Candidate>, excess: usize) {
    let mut removed = 0;
    while removed < excess && !moving.is_empty() {
        let last = moving.iter().filter_map(|c| c.truth.object).max();
        let before = moving.len();
        moving.retain(|c| c.truth.object != last);
        removed += before - moving.len();
    }
}
