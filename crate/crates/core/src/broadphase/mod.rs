//! Box-overlap broad phases and conversion of survivors into narrow-phase
//! queries.
//!
//! [`stq`] is the Sweep and Tiniest Queue broad phase; [`bf`] (all pairs) and
//! [`sap`] (endpoint sweep with an active list) are reference methods. All
//! three compare single-precision corners exactly, so on any input they
//! return the same set.
//!
//! Every method runs on the ambient rayon pool and returns its candidates in
//! canonical sorted order, so results do not depend on the worker count.

mod bf;
mod sap;
mod stq;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Point3, PrimitiveId, PrimitiveKind, SceneStep};

pub use bf::bf;
pub use sap::sap;
pub use stq::{stq, stq_with_stats, StqStats};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BroadPhaseError {
    #[error("no boxes to sweep")]
    Empty,
    #[error("candidate {0:?} does not belong to the scene")]
    OutOfRange(PrimitiveId),
}

/// Raised when a batch produces more candidates than its reserved capacity.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("candidate capacity {capacity} exceeded")]
pub struct CapacityExceeded {
    pub capacity: usize,
}

/// Unordered primitive pair stored with `left < right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidatePair {
    pub left: PrimitiveId,
    pub right: PrimitiveId,
}

impl CandidatePair {
    /// Canonicalizes the order; `None` when both ids are equal.
    pub fn new(a: PrimitiveId, b: PrimitiveId) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self { left: a, right: b }),
            std::cmp::Ordering::Greater => Some(Self { left: b, right: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// Vertex-face or edge-edge.
    pub fn is_narrow_kind(&self) -> bool {
        matches!(
            (self.left.kind, self.right.kind),
            (PrimitiveKind::Vertex, PrimitiveKind::Face) | (PrimitiveKind::Edge, PrimitiveKind::Edge)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Stq,
    Bf,
    Sap,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Stq, Method::Bf, Method::Sap];

    pub fn name(self) -> &'static str {
        match self {
            Method::Stq => "stq",
            Method::Bf => "bf",
            Method::Sap => "sap",
        }
    }

    /// Whether the method can never drop an overlapping pair.
    pub fn is_conservative(self) -> bool {
        true
    }

    pub fn run(self, boxes: &[Aabb]) -> Vec<CandidatePair> {
        match self {
            Method::Stq => stq(boxes),
            Method::Bf => bf(boxes),
            Method::Sap => sap(boxes),
        }
    }

    /// Candidates whose earlier box in `order` sits at a position inside
    /// `range`. Disjoint ranges covering `0..order.len()` partition the full
    /// candidate set.
    pub fn run_batch(
        self,
        order: &SweepOrder<'_>,
        range: Range<usize>,
        capacity: usize,
    ) -> Result<Vec<CandidatePair>, CapacityExceeded> {
        match self {
            Method::Stq => stq::run(order, range, capacity, None),
            Method::Bf => bf::run(order, range, capacity),
            Method::Sap => sap::run(order, range, capacity),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "stq" => Ok(Method::Stq),
            "bf" => Ok(Method::Bf),
            "sap" => Ok(Method::Sap),
            other => Err(format!("unknown broad-phase method {other:?}")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Axis of maximal variance of the box centers; ties prefer x, then y.
pub fn choose_axis(boxes: &[Aabb]) -> Result<usize, BroadPhaseError> {
    if boxes.is_empty() {
        return Err(BroadPhaseError::Empty);
    }
    let n = boxes.len() as f64;
    let add = |a: [f64; 3], b: [f64; 3]| [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
    let sum = boxes
        .par_iter()
        .map(|b| [b.center(0), b.center(1), b.center(2)])
        .reduce(|| [0.0; 3], add);
    let mean = sum.map(|s| s / n);
    let sq = boxes
        .par_iter()
        .map(|b| [0, 1, 2].map(|a| (b.center(a) - mean[a]).powi(2)))
        .reduce(|| [0.0; 3], add);
    let mut best = (0, f64::NEG_INFINITY);
    for (axis, s) in sq.into_iter().enumerate() {
        if s / n > best.1 {
            best = (axis, s / n);
        }
    }
    Ok(best.0)
}

/// Boxes sorted by their minimum along the sweep axis, ties broken by owner.
pub struct SweepOrder<'a> {
    pub boxes: &'a [Aabb],
    pub axis: usize,
    /// Input index of the box at each sorted position.
    pub order: Vec<u32>,
    /// Copies of the boxes in sorted order, so sweeps read memory linearly.
    sorted: Vec<Aabb>,
}

impl<'a> SweepOrder<'a> {
    pub fn new(boxes: &'a [Aabb]) -> Self {
        let axis = choose_axis(boxes).unwrap_or(0);
        Self::along(boxes, axis)
    }

    pub fn along(boxes: &'a [Aabb], axis: usize) -> Self {
        let order: Vec<u32> = if boxes.len() < 1 << 32 && boxes.windows(2).all(|w| w[0].owner < w[1].owner) {
            // Input already in owner order (as built): the position breaks
            // ties the same way, so the key is (min, position) in one word.
            let mut keys: Vec<u64> = boxes
                .par_iter()
                .enumerate()
                .map(|(i, b)| u64::from(ordered_bits(b.min[axis])) << 32 | i as u64)
                .collect();
            sort_keys(&mut keys);
            keys.into_par_iter().map(|k| k as u32).collect()
        } else if boxes.iter().all(|b| b.owner.index < 1 << 30) {
            // Pack (min, owner) into one integer so the sort touches only
            // contiguous keys.
            let mut keys: Vec<(u64, u32)> = boxes
                .par_iter()
                .enumerate()
                .map(|(i, b)| {
                    let owner = (b.owner.kind as u64) << 30 | u64::from(b.owner.index);
                    (u64::from(ordered_bits(b.min[axis])) << 32 | owner, i as u32)
                })
                .collect();
            sort_keys(&mut keys);
            keys.into_par_iter().map(|(_, i)| i).collect()
        } else {
            compared_order(boxes, axis)
        };
        let sorted = order.par_iter().map(|&i| boxes[i as usize]).collect();
        Self { boxes, axis, order, sorted }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    #[inline]
    pub fn at(&self, pos: usize) -> &Aabb {
        &self.sorted[pos]
    }
}

/// Keys are distinct, so the parallel and serial sorts agree.
fn sort_keys<T: Ord + Send>(keys: &mut [T]) {
    if rayon::current_num_threads() > 1 {
        keys.par_sort_unstable();
    } else {
        keys.sort_unstable();
    }
}

fn compared_order(boxes: &[Aabb], axis: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..boxes.len() as u32).collect();
    order.par_sort_unstable_by(|&i, &j| {
        let (a, b) = (&boxes[i as usize], &boxes[j as usize]);
        a.min[axis].total_cmp(&b.min[axis]).then(a.owner.cmp(&b.owner))
    });
    order
}

/// Unsigned integer with the same order as `f32::total_cmp`.
fn ordered_bits(x: f32) -> u32 {
    let b = x.to_bits();
    if b >> 31 == 1 {
        !b
    } else {
        b | 1 << 31
    }
}

/// Overlap on every axis plus the kind and adjacency post-filters.
#[inline]
pub(crate) fn accept(a: &Aabb, b: &Aabb) -> Option<CandidatePair> {
    use PrimitiveKind::*;
    // The kind test is the cheapest and rejects most sweep neighbours.
    let narrow = matches!((a.owner.kind, b.owner.kind), (Vertex, Face) | (Face, Vertex) | (Edge, Edge));
    if !narrow || !a.overlaps(b) || a.shares_vertex(b) {
        return None;
    }
    CandidatePair::new(a.owner, b.owner)
}

pub(crate) fn finish(mut pairs: Vec<CandidatePair>) -> Vec<CandidatePair> {
    pairs.par_sort_unstable();
    pairs.dedup();
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    VertexFace,
    EdgeEdge,
}

/// Positions of the four vertices of a vertex-face or edge-edge pair at both
/// ends of the step.
///
/// Vertex-face layout is `(p, a, b, c)` with `(a, b, c)` the triangle;
/// edge-edge layout is `(p0, p1, q0, q1)` with the two edges `(p0, p1)` and
/// `(q0, q1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NarrowQuery {
    pub kind: QueryKind,
    pub t0: [Point3; 4],
    pub t1: [Point3; 4],
    pub source: CandidatePair,
}

impl NarrowQuery {
    pub fn vertex_face(t0: [Point3; 4], t1: [Point3; 4]) -> Self {
        let source = CandidatePair { left: PrimitiveId::vertex(0), right: PrimitiveId::face(0) };
        Self { kind: QueryKind::VertexFace, t0, t1, source }
    }

    pub fn edge_edge(t0: [Point3; 4], t1: [Point3; 4]) -> Self {
        let source = CandidatePair { left: PrimitiveId::edge(0), right: PrimitiveId::edge(1) };
        Self { kind: QueryKind::EdgeEdge, t0, t1, source }
    }

    /// Distance between the two primitives at `t = 0`.
    pub fn initial_distance(&self) -> f64 {
        let p = &self.t0;
        match self.kind {
            QueryKind::VertexFace => crate::geometry::point_triangle_distance(&p[0], &p[1], &p[2], &p[3]),
            QueryKind::EdgeEdge => crate::geometry::segment_segment_distance(&p[0], &p[1], &p[2], &p[3]),
        }
    }
}

/// Splits candidates into vertex-face and edge-edge queries, dropping other
/// kind combinations and pairs that share a mesh vertex.
pub fn classify(
    pairs: &[CandidatePair],
    scene: &SceneStep,
) -> Result<(Vec<NarrowQuery>, Vec<NarrowQuery>), BroadPhaseError> {
    for p in pairs {
        for id in [p.left, p.right] {
            if !scene.contains(id) {
                return Err(BroadPhaseError::OutOfRange(id));
            }
        }
    }
    let gather = |ids: [u32; 4], source: CandidatePair, kind: QueryKind| NarrowQuery {
        kind,
        t0: ids.map(|v| scene.vertices_t0[v as usize]),
        t1: ids.map(|v| scene.vertices_t1[v as usize]),
        source,
    };
    let queries: Vec<NarrowQuery> = pairs
        .par_iter()
        .filter_map(|&pair| {
            let l = scene.vertex_ids(pair.left);
            let r = scene.vertex_ids(pair.right);
            match (pair.left.kind, pair.right.kind) {
                (PrimitiveKind::Vertex, PrimitiveKind::Face) if !r.contains(&l[0]) => {
                    Some(gather([l[0], r[0], r[1], r[2]], pair, QueryKind::VertexFace))
                }
                (PrimitiveKind::Edge, PrimitiveKind::Edge) if !r[..2].contains(&l[0]) && !r[..2].contains(&l[1]) => {
                    Some(gather([l[0], l[1], r[0], r[1]], pair, QueryKind::EdgeEdge))
                }
                _ => None,
            }
        })
        .collect();
    Ok(queries.into_iter().partition(|q| q.kind == QueryKind::VertexFace))
}
