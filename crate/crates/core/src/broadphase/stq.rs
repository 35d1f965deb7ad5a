//! Sweep and Tiniest Queue.
//!
//! Boxes are sorted by their minimum along the highest-variance axis. The
//! queue holds at most one pair `(i, j)` per sorted position `i`: the next
//! box `j` that still overlaps `i` along the sweep axis. Each round tests the
//! queued pairs on the two remaining axes and advances `j` by one while the
//! sweep-axis overlap persists, so queues never exceed `k - 1` entries and
//! shrink monotonically.

use std::ops::Range;

use rayon::prelude::*;

use super::{accept, finish, CandidatePair, CapacityExceeded, SweepOrder};
use crate::geometry::Aabb;

const CHUNK: usize = 2048;

/// Queue sizes observed by one STQ run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StqStats {
    /// Queue length at the start of every round, the seed queue first.
    pub round_sizes: Vec<usize>,
    pub box_count: usize,
}

pub fn stq(boxes: &[Aabb]) -> Vec<CandidatePair> {
    stq_with_stats(boxes).0
}

pub fn stq_with_stats(boxes: &[Aabb]) -> (Vec<CandidatePair>, StqStats) {
    let order = SweepOrder::new(boxes);
    let mut stats = StqStats::default();
    let pairs = run(&order, 0..order.len(), usize::MAX, Some(&mut stats)).expect("unbounded capacity");
    (pairs, stats)
}

pub(super) fn run(
    order: &SweepOrder<'_>,
    range: Range<usize>,
    capacity: usize,
    mut stats: Option<&mut StqStats>,
) -> Result<Vec<CandidatePair>, CapacityExceeded> {
    let n = order.len();
    let axis = order.axis;
    let end = range.end.min(n);
    let start = range.start.min(end);
    if let Some(s) = stats.as_deref_mut() {
        s.box_count = n;
    }

    let mut queue: Vec<(u32, u32)> = (start..end)
        .into_par_iter()
        .filter(|&i| i + 1 < n && order.at(i).overlaps_axis(order.at(i + 1), axis))
        .map(|i| (i as u32, i as u32 + 1))
        .collect();

    let mut out: Vec<CandidatePair> = Vec::new();
    while !queue.is_empty() {
        if let Some(s) = stats.as_deref_mut() {
            s.round_sizes.push(queue.len());
        }
        // Each chunk advances its entries in place and keeps the survivors
        // at its front; the fronts are then compacted in chunk order.
        let parts: Vec<(usize, Vec<CandidatePair>)> = queue
            .par_chunks_mut(CHUNK)
            .map(|chunk| {
                let mut found = Vec::new();
                let mut kept = 0;
                for k in 0..chunk.len() {
                    let (i, j) = chunk[k];
                    let bi = order.at(i as usize);
                    if let Some(pair) = accept(bi, order.at(j as usize)) {
                        found.push(pair);
                    }
                    let succ = j as usize + 1;
                    if succ < n && bi.overlaps_axis(order.at(succ), axis) {
                        chunk[kept] = (i, succ as u32);
                        kept += 1;
                    }
                }
                (kept, found)
            })
            .collect();
        let mut len = 0;
        for (c, (kept, found)) in parts.into_iter().enumerate() {
            let from = c * CHUNK;
            queue.copy_within(from..from + kept, len);
            len += kept;
            out.extend(found);
        }
        queue.truncate(len);
        if out.len() > capacity {
            return Err(CapacityExceeded { capacity });
        }
    }
    Ok(finish(out))
}
