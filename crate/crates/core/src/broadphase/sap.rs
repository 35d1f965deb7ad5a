//! Serial endpoint sweep-and-prune with an active list.

use std::ops::Range;

use super::{accept, finish, CandidatePair, CapacityExceeded, SweepOrder};
use crate::geometry::Aabb;

pub fn sap(boxes: &[Aabb]) -> Vec<CandidatePair> {
    if boxes.is_empty() {
        return Vec::new();
    }
    let order = SweepOrder::new(boxes);
    run(&order, 0..order.len(), usize::MAX).expect("unbounded capacity")
}

pub(super) fn run(
    order: &SweepOrder<'_>,
    range: Range<usize>,
    capacity: usize,
) -> Result<Vec<CandidatePair>, CapacityExceeded> {
    let axis = order.axis;
    // (value, is_max, sorted position); a min endpoint sorts before a max
    // endpoint of equal value so touching intervals overlap.
    let mut endpoints: Vec<(f32, bool, u32)> = Vec::with_capacity(2 * order.len());
    for pos in 0..order.len() {
        let b = order.at(pos);
        endpoints.push((b.min[axis], false, pos as u32));
        endpoints.push((b.max[axis], true, pos as u32));
    }
    endpoints.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut active: Vec<u32> = Vec::new();
    let mut out = Vec::new();
    for (_, is_max, pos) in endpoints {
        if is_max {
            if let Some(k) = active.iter().position(|&p| p == pos) {
                active.swap_remove(k);
            }
            continue;
        }
        let incoming = order.at(pos as usize);
        for &other in &active {
            // `other` entered the sweep first, so it is the earlier box.
            if range.contains(&(other as usize)) {
                if let Some(pair) = accept(order.at(other as usize), incoming) {
                    out.push(pair);
                }
            }
        }
        if out.len() > capacity {
            return Err(CapacityExceeded { capacity });
        }
        active.push(pos);
    }
    Ok(finish(out))
}
