//! Queue-based inclusion-function narrow phase.
//!
//! Every query starts as the parameter box `[0,1]^3` over `(t, u, v)`. Rounds
//! process the whole interval queue: an interval is dropped when it starts
//! after the query's current time of impact or when its codomain box misses
//! the tolerance cube around the origin, reports an impact at its left time
//! endpoint once the codomain box is narrower than `delta` (or inside the
//! cube), and is bisected otherwise. Children form the next round's queue.
//!
//! Decisions inside a round are computed in parallel against the times of
//! impact known at the start of the round; they are then applied in queue
//! order, so the result is independent of the worker count.

mod interval;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broadphase::{NarrowQuery, QueryKind};

pub use interval::Interval;

/// Codomain box: one interval per world axis.
pub type Box3 = [Interval; 3];

const T: usize = 0;
const U: usize = 1;
const V: usize = 2;

const PARALLEL_MIN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MinSeparation {
    /// Fixed clearance in world units.
    Absolute(f64),
    /// This fraction of each query's distance at `t = 0`.
    Relative(f64),
}

impl MinSeparation {
    pub fn resolve(self, query: &NarrowQuery) -> f64 {
        match self {
            MinSeparation::Absolute(d) => d,
            MinSeparation::Relative(f) => {
                let d = f * query.initial_distance();
                if d.is_finite() && d > 0.0 {
                    d
                } else {
                    0.0
                }
            }
        }
    }
}

/// Which impact times may prune an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToiScope {
    /// Only the interval's own query. Every per-query result is conservative.
    PerQuery,
    /// The earliest impact over all queries. Only the global result is
    /// meaningful; per-query results of late queries may be pruned away.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NarrowConfig {
    /// Codomain width below which an interval reports an impact.
    pub delta: f64,
    pub min_separation: MinSeparation,
    /// Intervals starting at or after this time are ignored.
    pub t_max: f64,
    /// Per-query split budget.
    pub max_splits: u64,
    /// Always split intervals that start at `t = 0`, ignoring `delta` and the
    /// split budget.
    pub no_zero_toi: bool,
    pub scope: ToiScope,
}

impl Default for NarrowConfig {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            min_separation: MinSeparation::Absolute(0.0),
            t_max: 1.0,
            max_splits: 1 << 20,
            no_zero_toi: false,
            scope: ToiScope::PerQuery,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NarrowError {
    #[error("delta must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("minimum separation must be non-negative and finite, got {0}")]
    BadSeparation(f64),
    #[error("t_max must lie in (0, 1], got {0}")]
    BadTMax(f64),
    #[error("max_splits must be at least 1")]
    NoSplitBudget,
    #[error("interval queue needs {needed} slots but capacity is {capacity}")]
    QueueOverflow { needed: usize, capacity: usize },
}

impl NarrowConfig {
    pub fn validate(&self) -> Result<(), NarrowError> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(NarrowError::BadDelta(self.delta));
        }
        let sep = match self.min_separation {
            MinSeparation::Absolute(d) | MinSeparation::Relative(d) => d,
        };
        if !(sep >= 0.0 && sep.is_finite()) {
            return Err(NarrowError::BadSeparation(sep));
        }
        if !(self.t_max > 0.0 && self.t_max <= 1.0) {
            return Err(NarrowError::BadTMax(self.t_max));
        }
        if self.max_splits == 0 {
            return Err(NarrowError::NoSplitBudget);
        }
        Ok(())
    }
}

/// Sub-box of `[0,1]^3` over `(t, u, v)` belonging to one query. Endpoints
/// are dyadic rationals produced by exact bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox {
    pub query: u32,
    pub t: [f64; 2],
    pub u: [f64; 2],
    pub v: [f64; 2],
    /// Bisections applied along `t`, `u` and `v`.
    pub depth: [u16; 3],
}

impl IntervalBox {
    pub fn root(query: u32) -> Self {
        Self { query, t: [0.0, 1.0], u: [0.0, 1.0], v: [0.0, 1.0], depth: [0; 3] }
    }

    pub fn dim(&self, d: usize) -> [f64; 2] {
        match d {
            T => self.t,
            U => self.u,
            _ => self.v,
        }
    }

    fn dim_mut(&mut self, d: usize) -> &mut [f64; 2] {
        match d {
            T => &mut self.t,
            U => &mut self.u,
            _ => &mut self.v,
        }
    }

    /// Exact midpoint of dimension `d`, if it lies strictly inside.
    pub fn midpoint(&self, d: usize) -> Option<f64> {
        let [lo, hi] = self.dim(d);
        let mid = lo + (hi - lo) * 0.5;
        (lo < mid && mid < hi && mid - lo == hi - mid).then_some(mid)
    }

    /// Bisects dimension `d` (0 = t, 1 = u, 2 = v) at its midpoint.
    pub fn split(&self, d: usize) -> Option<(Self, Self)> {
        let mid = self.midpoint(d)?;
        let mut left = *self;
        let mut right = *self;
        left.dim_mut(d)[1] = mid;
        right.dim_mut(d)[0] = mid;
        left.depth[d] += 1;
        right.depth[d] += 1;
        Some((left, right))
    }
}

/// Per-query data shared by all of its intervals. `F = base - u du - v dv`
/// where each of the three difference vectors is `start + t motion`.
#[derive(Debug, Clone, Copy)]
struct Prepared {
    kind: QueryKind,
    /// `[base, du, dv]`, per component, as `(start, motion)` enclosures.
    lin: [[(Interval, Interval); 3]; 3],
}

impl Prepared {
    fn new(q: &NarrowQuery) -> Self {
        // p - a - u (b - a) - v (c - a), or p0 + u (p1 - p0) - q0 - v (q1 - q0)
        let pairs = match q.kind {
            QueryKind::VertexFace => [(0, 1), (2, 1), (3, 1)],
            QueryKind::EdgeEdge => [(0, 2), (0, 1), (3, 2)],
        };
        let lin = pairs.map(|(i, j)| {
            std::array::from_fn(|k| {
                let p = |v: f64| Interval::point(v);
                let start = p(q.t0[i][k]).sub(p(q.t0[j][k]));
                let motion = p(q.t1[i][k]).sub(p(q.t0[i][k])).sub(p(q.t1[j][k]).sub(p(q.t0[j][k])));
                (start, motion)
            })
        });
        Self { kind: q.kind, lin }
    }

    /// Enclosures of component `k` of `F` at the 8 corners, indexed by
    /// `t << 2 | u << 1 | v`.
    fn component(&self, ib: &IntervalBox, k: usize) -> [Interval; 8] {
        let mut out = [Interval::point(0.0); 8];
        for (ti, &t) in ib.t.iter().enumerate() {
            let [base, du, dv] = self.lin.map(|l| l[k].0.add(l[k].1.scale(t)));
            for (ui, &u) in ib.u.iter().enumerate() {
                let bu = base.sub(du.scale(u));
                for (vi, &v) in ib.v.iter().enumerate() {
                    out[ti << 2 | ui << 1 | vi] = bu.sub(dv.scale(v));
                }
            }
        }
        out
    }

    fn corners(&self, ib: &IntervalBox) -> [Box3; 8] {
        let c: [[Interval; 8]; 3] = std::array::from_fn(|k| self.component(ib, k));
        std::array::from_fn(|i| std::array::from_fn(|k| c[k][i]))
    }
}

fn hull(corners: &[Box3; 8]) -> Box3 {
    std::array::from_fn(|k| corners.iter().skip(1).fold(corners[0][k], |acc, c| acc.hull(c[k])))
}

/// Box guaranteed to contain `F(t, u, v)` for every `(t, u, v)` in `ib`,
/// rounding error included. `F` is multilinear, so its exact range over a
/// box is the hull of its corner values.
pub fn inclusion_box(query: &NarrowQuery, ib: &IntervalBox) -> Box3 {
    hull(&Prepared::new(query).corners(ib))
}

/// Largest component width.
pub fn box_width(b: &Box3) -> f64 {
    b.iter().map(|i| i.width()).fold(0.0, f64::max)
}

fn inside_cube(b: &Box3, d: f64) -> bool {
    b.iter().all(|i| -d <= i.lo && i.hi <= d)
}

/// Domain dimensions ordered by how much the codomain varies along them;
/// ties keep the order t, u, v.
fn split_preference(corners: &[Box3; 8]) -> [usize; 3] {
    let mut influence = [0.0f64; 3];
    for c in 0..8 {
        for (d, bit) in [(T, 4), (U, 2), (V, 1)] {
            if c & bit == 0 {
                let (a, b) = (&corners[c], &corners[c | bit]);
                for k in 0..3 {
                    influence[d] = influence[d].max((a[k].mid() - b[k].mid()).abs());
                }
            }
        }
    }
    let mut dims = [T, U, V];
    dims.sort_by(|&a, &b| influence[b].total_cmp(&influence[a]).then(a.cmp(&b)));
    dims
}

/// Outcome of examining one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Processed {
    Pruned,
    /// An impact may occur at or after this time.
    Collision { t: f64, unsplittable: bool },
    Split { left: IntervalBox, right: IntervalBox, forced: bool },
}

/// One refinement step for `ib`, which belongs to `query`.
///
/// `t_star` is the best impact time known for pruning and `separation` the
/// resolved minimum separation of this query.
pub fn process_interval(
    query: &NarrowQuery,
    ib: &IntervalBox,
    t_star: f64,
    cfg: &NarrowConfig,
    separation: f64,
) -> Processed {
    process(&Prepared::new(query), ib, t_star, cfg, separation)
}

fn process(prep: &Prepared, ib: &IntervalBox, t_star: f64, cfg: &NarrowConfig, sep: f64) -> Processed {
    if ib.t[0] >= t_star {
        return Processed::Pruned;
    }
    if prep.kind == QueryKind::VertexFace && ib.u[0] + ib.v[0] > 1.0 {
        return Processed::Pruned;
    }
    // Components are checked as they are computed; most pruned intervals
    // miss on the first or second.
    let mut comps = [[Interval::point(0.0); 8]; 3];
    let mut b = [Interval::point(0.0); 3];
    for k in 0..3 {
        comps[k] = prep.component(ib, k);
        b[k] = comps[k][1..].iter().fold(comps[k][0], |acc, c| acc.hull(*c));
        if !(b[k].lo <= sep && -sep <= b[k].hi) {
            return Processed::Pruned;
        }
    }
    let corners: [Box3; 8] = std::array::from_fn(|i| std::array::from_fn(|k| comps[k][i]));
    let forced = cfg.no_zero_toi && ib.t[0] == 0.0;
    if !forced && (box_width(&b) < cfg.delta || inside_cube(&b, sep)) {
        return Processed::Collision { t: ib.t[0], unsplittable: false };
    }
    for d in split_preference(&corners) {
        if let Some((left, right)) = ib.split(d) {
            return Processed::Split { left, right, forced };
        }
    }
    Processed::Collision { t: ib.t[0], unsplittable: true }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToiResult {
    /// Conservative earliest impact time, `None` when no impact was found.
    pub toi: Option<f64>,
    /// The split budget ran out and the answer was taken early.
    pub tolerance_hit: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NarrowStats {
    pub rounds: usize,
    pub intervals_processed: u64,
    pub max_queue: usize,
    pub splits: u64,
    /// Every improvement of the global impact time, in order.
    pub global_updates: Vec<f64>,
    /// An interval starting at `t = 0` could not be split further while the
    /// no-zero rule was active.
    pub zero_unsplittable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NarrowOutcome {
    pub per_query: Vec<ToiResult>,
    pub toi: Option<f64>,
    pub stats: NarrowStats,
}

/// Extra controls used by batched execution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NarrowLimits {
    /// Impact time already established elsewhere; intervals starting at or
    /// after it are pruned.
    pub initial_toi: Option<f64>,
    /// Maximum interval-queue length.
    pub queue_capacity: usize,
}

impl Default for NarrowLimits {
    fn default() -> Self {
        Self { initial_toi: None, queue_capacity: usize::MAX }
    }
}

pub fn narrow_phase(queries: &[NarrowQuery], cfg: &NarrowConfig) -> Result<NarrowOutcome, NarrowError> {
    narrow_phase_with(queries, cfg, &NarrowLimits::default())
}

pub fn narrow_phase_with(
    queries: &[NarrowQuery],
    cfg: &NarrowConfig,
    limits: &NarrowLimits,
) -> Result<NarrowOutcome, NarrowError> {
    cfg.validate()?;
    let prepared: Vec<(Prepared, f64)> = queries
        .par_iter()
        .map(|q| (Prepared::new(q), cfg.min_separation.resolve(q)))
        .collect();

    let ceiling = limits.initial_toi.map_or(cfg.t_max, |t| t.min(cfg.t_max));
    let mut t_star = vec![ceiling; queries.len()];
    let mut found = vec![false; queries.len()];
    let mut budget_hit = vec![false; queries.len()];
    let mut splits = vec![0u64; queries.len()];
    let mut global = ceiling;
    let mut global_found = false;
    let mut stats = NarrowStats::default();

    let mut queue: Vec<IntervalBox> = (0..queries.len() as u32).map(IntervalBox::root).collect();
    let capacity = limits.queue_capacity;
    if queue.len() > capacity {
        return Err(NarrowError::QueueOverflow { needed: queue.len(), capacity });
    }

    let bound = |t_star: &[f64], global: f64, q: usize| match cfg.scope {
        ToiScope::PerQuery => t_star[q],
        ToiScope::Global => t_star[q].min(global),
    };

    while !queue.is_empty() {
        stats.rounds += 1;
        stats.max_queue = stats.max_queue.max(queue.len());
        stats.intervals_processed += queue.len() as u64;
        let step = |ib: &IntervalBox| {
            let q = ib.query as usize;
            let (prep, sep) = &prepared[q];
            process(prep, ib, bound(&t_star, global, q), cfg, *sep)
        };
        // Small queues are not worth distributing.
        let steps: Vec<Processed> = if queue.len() < PARALLEL_MIN {
            queue.iter().map(step).collect()
        } else {
            queue.par_iter().map(step).collect()
        };

        let mut next = Vec::with_capacity(queue.len());
        for (ib, step) in queue.iter().zip(steps) {
            let q = ib.query as usize;
            let hit = match step {
                Processed::Pruned => None,
                Processed::Collision { t, unsplittable } => {
                    if unsplittable && cfg.no_zero_toi && t == 0.0 {
                        stats.zero_unsplittable = true;
                    }
                    Some(t)
                }
                Processed::Split { left, right, forced } => {
                    if ib.t[0] >= bound(&t_star, global, q) {
                        None
                    } else if forced || splits[q] < cfg.max_splits {
                        if !forced {
                            splits[q] += 1;
                        }
                        stats.splits += 1;
                        next.push(left);
                        next.push(right);
                        None
                    } else {
                        budget_hit[q] = true;
                        Some(ib.t[0])
                    }
                }
            };
            // Hits always start before the pruning bound, so the first hit of
            // a query (or overall) is also an improvement.
            if let Some(t) = hit {
                if t < t_star[q] {
                    t_star[q] = t;
                    found[q] = true;
                }
                if t < global {
                    global = t;
                    global_found = true;
                    stats.global_updates.push(t);
                }
            }
        }
        if next.len() > capacity {
            return Err(NarrowError::QueueOverflow { needed: next.len(), capacity });
        }
        queue = next;
    }

    let per_query = (0..queries.len())
        .map(|q| ToiResult { toi: found[q].then_some(t_star[q]), tolerance_hit: budget_hit[q] })
        .collect();
    Ok(NarrowOutcome { per_query, toi: global_found.then_some(global), stats })
}
