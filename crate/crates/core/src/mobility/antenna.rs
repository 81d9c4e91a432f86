use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MobilityError;
use crate::clock::LocalClock;
use crate::ingest::{CellRegistry, EventTable};

/// Distinct devices seen by one cell during one bucket. Carries no ids.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AntennaCount {
    pub cell_id: String,
    /// Bucket start, epoch seconds; buckets align to local midnight.
    pub bucket_start: i64,
    pub devices: u64,
}

/// Distinct-device counts per (cell, bucket). `cells` restricts the output to
/// a subset of registry indices.
pub fn antenna_counts(
    events: &EventTable,
    registry: &CellRegistry,
    cells: Option<&BTreeSet<u32>>,
    bucket_secs: i64,
    clock: &LocalClock,
) -> Result<Vec<AntennaCount>, MobilityError> {
    if bucket_secs < 60 {
        return Err(MobilityError::BucketTooSmall(bucket_secs));
    }
    let keep: Vec<bool> = (0..registry.len() as u32).map(|c| cells.is_none_or(|set| set.contains(&c))).collect();
    let offset = clock.offset_secs() as i64;
    let mut keys: Vec<(u32, i64, u32)> = events
        .events
        .par_iter()
        .filter(|e| keep[e.cell as usize])
        .map(|e| (e.cell, (e.ts + offset).div_euclid(bucket_secs) * bucket_secs - offset, e.subscriber))
        .collect();
    keys.par_sort_unstable();
    keys.dedup();
    let mut out: Vec<AntennaCount> = Vec::new();
    for (cell, bucket, _) in keys {
        match out.last_mut() {
            Some(last) if last.bucket_start == bucket && registry.lookup(&last.cell_id) == Some(cell) => last.devices += 1,
            _ => out.push(AntennaCount { cell_id: registry.site(cell).cell_id.clone(), bucket_start: bucket, devices: 1 }),
        }
    }
    out.sort();
    Ok(out)
}
