//! Fixtures shared by the benchmarks.

use radclutter::accum::{accumulate, window_range, CloudPoint};
use radclutter::relabel::{relabel_dataset, RelabelParams};
use radclutter::synth::{generate_recording, preset};
use radclutter::Recording;

/// A labeled urban recording.
pub fn urban(seed: u64) -> Recording {
    let mut rec = generate_recording(&preset("urban", seed).expect("preset exists")).expect("preset generates");
    relabel_dataset(&mut rec.scans, &RelabelParams::default()).expect("generated data is annotated");
    rec
}

/// The accumulated cloud ending at the middle scan of `rec`.
pub fn middle_cloud(rec: &Recording, window_us: i64) -> Vec<CloudPoint> {
    let latest = rec.scans.len() / 2;
    let range = window_range(&rec.scans, latest, window_us);
    accumulate(&rec.scans[range.start..latest], &rec.scans[latest], &rec.mounts).expect("valid recording")
}
