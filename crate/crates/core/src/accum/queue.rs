use std::collections::VecDeque;

use super::CloudPoint;
use crate::error::{Error, Result};
use crate::geometry::{to_vehicle_frame, transform_to_latest};
use crate::types::{find_mount, Detection, Pose2, Scan, SensorMount, Vec2};

/// Bounded queue: pushes go to the front, overflow leaves from the back.
#[derive(Clone, Debug)]
pub struct FixedQueue<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> FixedQueue<T> {
    pub fn new(capacity: usize) -> Self {
        FixedQueue {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    /// Pushes to the front and returns the evicted back element, if any.
    pub fn push(&mut self, item: T) -> Option<T> {
        if self.capacity == 0 {
            return Some(item);
        }
        self.items.push_front(item);
        if self.items.len() > self.capacity {
            self.items.pop_back()
        } else {
            None
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    /// Front to back.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &T> {
        self.items.iter()
    }
}

impl<T: Clone> FixedQueue<T> {
    /// Front-to-back copy of the content.
    pub fn to_vec(&self) -> Vec<T> {
        self.items.iter().cloned().collect()
    }
}

/// Ordering key of a point within a scan's push sequence.
pub trait PushKey {
    fn v_comp(&self) -> f64;
    fn rcs(&self) -> f64;
}

impl PushKey for Detection {
    fn v_comp(&self) -> f64 {
        self.v_comp
    }
    fn rcs(&self) -> f64 {
        self.rcs
    }
}

impl PushKey for CloudPoint {
    fn v_comp(&self) -> f64 {
        self.detection.v_comp
    }
    fn rcs(&self) -> f64 {
        self.detection.rcs
    }
}

/// Push sequence of a scan: ascending `|v_comp|`, then ascending RCS, then
/// input order. The slowest point is pushed first and so is evicted first.
pub fn push_order<T: PushKey>(points: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pa.v_comp()
            .abs()
            .total_cmp(&pb.v_comp().abs())
            .then(pa.rcs().total_cmp(&pb.rcs()))
    });
    idx
}

/// Pushes one scan's points in [`push_order`].
pub fn queue_push_scan<T: PushKey>(queue: &mut FixedQueue<T>, points: Vec<T>) {
    let order = push_order(&points);
    let mut slots: Vec<Option<T>> = points.into_iter().map(Some).collect();
    for i in order {
        queue.push(slots[i].take().expect("each index once"));
    }
}

/// Reference content (front to back) of a queue of `capacity` after pushing
/// `history` scan by scan, each scan given in its push sequence: whole scans
/// from the newest backwards while they fit, then the latest-pushed points
/// of the next older scan.
pub fn queue_equivalence_oracle<T: Clone>(history: &[Vec<T>], capacity: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(capacity);
    for scan in history.iter().rev() {
        let room = capacity - out.len();
        if room == 0 {
            break;
        }
        out.extend(scan.iter().rev().take(room).cloned());
    }
    out
}

#[derive(Clone, Debug)]
struct Queued {
    detection: Detection,
    local: Vec2,
    pose: Pose2,
    timestamp_us: i64,
    scan_id: u64,
    sensor_id: u8,
    index: usize,
}

impl PushKey for Queued {
    fn v_comp(&self) -> f64 {
        self.detection.v_comp
    }
    fn rcs(&self) -> f64 {
        self.detection.rcs
    }
}

/// Streaming accumulation through a [`FixedQueue`]. Scans are pushed in
/// timestamp order regardless of sensor; a snapshot expresses the content in
/// the frame of the latest pushed scan and drops points older than the
/// window.
#[derive(Clone, Debug)]
pub struct StreamAccumulator {
    queue: FixedQueue<Queued>,
    window_us: i64,
    mounts: Vec<SensorMount>,
    latest: Option<(i64, Pose2)>,
}

impl StreamAccumulator {
    pub fn new(capacity: usize, window_us: i64, mounts: Vec<SensorMount>) -> Self {
        StreamAccumulator {
            queue: FixedQueue::new(capacity),
            window_us,
            mounts,
            latest: None,
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn push_scan(&mut self, scan: &Scan) -> Result<()> {
        if let Some((t, _)) = self.latest {
            if scan.timestamp_us <= t {
                return Err(Error::Ordering(format!(
                    "scan {} (t = {} us) pushed after t = {t} us",
                    scan.scan_id, scan.timestamp_us
                )));
            }
        }
        let mount = find_mount(&self.mounts, scan.sensor_id)?;
        let mut points = Vec::with_capacity(scan.detections.len());
        for (index, d) in scan.detections.iter().enumerate() {
            points.push(Queued {
                detection: d.clone(),
                local: to_vehicle_frame(d.range, d.azimuth_deg, mount)?,
                pose: scan.ego.pose,
                timestamp_us: scan.timestamp_us,
                scan_id: scan.scan_id,
                sensor_id: scan.sensor_id,
                index,
            });
        }
        queue_push_scan(&mut self.queue, points);
        self.latest = Some((scan.timestamp_us, scan.ego.pose));
        Ok(())
    }

    /// Queue content front to back, in the latest vehicle frame.
    pub fn snapshot(&self) -> Result<Vec<CloudPoint>> {
        let Some((t, pose)) = self.latest else {
            return Ok(Vec::new());
        };
        let mut out = Vec::with_capacity(self.queue.len());
        for q in self.queue.iter() {
            if t - q.timestamp_us > self.window_us {
                continue;
            }
            out.push(CloudPoint {
                detection: q.detection.clone(),
                position: transform_to_latest(q.local, &q.pose, &pose)?,
                dt: (q.timestamp_us - t) as f64 * 1e-6,
                is_replica: false,
                scan_id: q.scan_id,
                sensor_id: q.sensor_id,
                index: q.index,
            });
        }
        Ok(out)
    }
}
