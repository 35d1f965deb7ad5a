//! All-pairs overlap enumeration; the broad-phase reference.

use std::ops::Range;

use rayon::prelude::*;

use super::{accept, finish, CandidatePair, CapacityExceeded, SweepOrder};
use crate::geometry::Aabb;

pub fn bf(boxes: &[Aabb]) -> Vec<CandidatePair> {
    let pairs: Vec<CandidatePair> = (0..boxes.len())
        .into_par_iter()
        .flat_map_iter(|i| boxes[i + 1..].iter().filter_map(move |b| accept(&boxes[i], b)))
        .collect();
    finish(pairs)
}

pub(super) fn run(
    order: &SweepOrder<'_>,
    range: Range<usize>,
    capacity: usize,
) -> Result<Vec<CandidatePair>, CapacityExceeded> {
    let n = order.len();
    let pairs: Vec<CandidatePair> = (range.start.min(n)..range.end.min(n))
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..n).filter_map(move |j| accept(order.at(i), order.at(j))))
        .collect();
    if pairs.len() > capacity {
        return Err(CapacityExceeded { capacity });
    }
    Ok(finish(pairs))
}
