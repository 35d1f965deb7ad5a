//! End-to-end CCD for one time step: boxes, broad phase, classification and
//! narrow phase under an explicit memory budget.
//!
//! The budget is split the way a fixed-size device allocation would be: a
//! broad-phase batch may emit at most `S_C = (M - S_P) / (S_Q + 3 S_i)`
//! candidates; a batch that overflows is retried as two halves of its box
//! range. The narrow phase of a batch gets an interval queue of
//! `M' / S_I` entries, where `M'` is what is left after its queries; on
//! overflow the batch's queries are retried in halves. Batches run in a fixed
//! order and each starts from the running minimum impact time, so the result
//! does not depend on how the work was cut.

use std::mem::size_of;
use std::ops::Range;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broadphase::{classify, BroadPhaseError, CandidatePair, Method, NarrowQuery, SweepOrder};
use crate::geometry::{build_boxes, Aabb, GeometryError, SceneStep};
use crate::narrowphase::{
    narrow_phase_with, IntervalBox, MinSeparation, NarrowConfig, NarrowError, NarrowLimits, ToiResult,
};

/// Byte sizes charged against the memory budget per record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSizes {
    /// Fixed parameters (`S_P`).
    pub params: u64,
    /// One narrow-phase query (`S_Q`).
    pub query: u64,
    /// One interval of the narrow-phase queue (`S_I`).
    pub interval: u64,
    /// One index (`S_i`).
    pub index: u64,
}

impl Default for RecordSizes {
    fn default() -> Self {
        Self { params: 56, query: 192, interval: 252, index: 8 }
    }
}

impl RecordSizes {
    /// The sizes of this implementation's own records.
    pub fn host() -> Self {
        Self {
            params: size_of::<NarrowConfig>() as u64,
            query: size_of::<NarrowQuery>() as u64,
            interval: size_of::<IntervalBox>() as u64,
            index: size_of::<u32>() as u64,
        }
    }

    /// Candidates that fit in `budget` bytes.
    pub fn candidate_capacity(&self, budget: u64) -> u64 {
        budget.saturating_sub(self.params) / (self.query + 3 * self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub narrow: NarrowConfig,
    pub broad_method: Method,
    /// Bytes available to one step.
    pub memory_budget: u64,
    pub record_sizes: RecordSizes,
    /// Clearance as a fraction of each pair's initial distance, used by
    /// [`ccd_no_zero_toi`].
    pub min_sep_fraction: f64,
    /// Worker threads; 0 uses the ambient rayon pool.
    pub threads: usize,
    /// Extra box padding per side, in world units.
    pub inflation: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            narrow: NarrowConfig::default(),
            broad_method: Method::Stq,
            memory_budget: u64::MAX,
            record_sizes: RecordSizes::default(),
            min_sep_fraction: 0.2,
            threads: 0,
            inflation: 0.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Broad(#[from] BroadPhaseError),
    #[error(transparent)]
    Narrow(#[from] NarrowError),
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("memory budget of {budget} bytes cannot hold {what}")]
    BudgetTooSmall { budget: u64, what: String },
    #[error("failed to build thread pool: {0}")]
    ThreadPool(String),
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.narrow.validate()?;
        let r = &self.record_sizes;
        if r.params == 0 || r.query == 0 || r.interval == 0 || r.index == 0 {
            return Err(PipelineError::Config("record sizes must be positive".into()));
        }
        if self.memory_budget <= r.params {
            return Err(PipelineError::Config(format!(
                "memory budget {} does not exceed the parameter block ({} bytes)",
                self.memory_budget, r.params
            )));
        }
        if !(self.min_sep_fraction >= 0.0 && self.min_sep_fraction.is_finite()) {
            return Err(PipelineError::Config(format!("bad min_sep_fraction {}", self.min_sep_fraction)));
        }
        if !(self.inflation >= 0.0 && self.inflation.is_finite()) {
            return Err(PipelineError::Config(format!("bad inflation {}", self.inflation)));
        }
        Ok(())
    }
}

/// Wall time per stage: box construction, broad phase, classification of
/// candidates into queries, narrow phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub boxes: Duration,
    pub broad: Duration,
    pub classify: Duration,
    pub narrow: Duration,
    pub total: Duration,
}

impl StageTimes {
    pub fn staged(&self) -> Duration {
        self.boxes + self.broad + self.classify + self.narrow
    }

    fn add(&mut self, o: &StageTimes) {
        self.boxes += o.boxes;
        self.broad += o.broad;
        self.classify += o.classify;
        self.narrow += o.narrow;
        self.total += o.total;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcdReport {
    pub toi: ToiResult,
    /// Sorted union of the candidates of every batch.
    pub candidates: Vec<CandidatePair>,
    pub candidate_count: usize,
    pub query_count: usize,
    /// Narrow-phase runs that completed, at least one per broad batch.
    pub batch_count: usize,
    pub broad_batches: usize,
    pub times: StageTimes,
    /// Peak bytes of boxes, sort order, candidates, queries and interval
    /// queue held at once, using the host's record sizes.
    pub tracked_peak_bytes: u64,
    /// The no-zero retry met an interval at `t = 0` it could not split.
    pub zero_unsplittable: bool,
    /// The no-zero policy re-ran the step; `raw_retry_toi` is that run's
    /// result before scaling.
    pub retried: bool,
    pub raw_retry_toi: Option<f64>,
}

/// Scale applied to the impact time found by the no-zero retry.
pub const RETRY_SCALE: f64 = 0.8;

fn with_pool<T: Send>(
    threads: usize,
    f: impl FnOnce() -> Result<T, PipelineError> + Send,
) -> Result<T, PipelineError> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    pool.install(f)
}

/// Earliest impact time of `scene` over the step.
pub fn ccd(scene: &SceneStep, cfg: &PipelineConfig) -> Result<CcdReport, PipelineError> {
    cfg.validate()?;
    with_pool(cfg.threads, || run(scene, cfg))
}

/// [`ccd`] with a minimum separation of `min_sep_fraction` times each pair's
/// initial distance. If that yields exactly 0, the step is re-run without
/// separation and with intervals at `t = 0` always split, and the result is
/// scaled by [`RETRY_SCALE`]. The scene must be intersection free at `t = 0`.
pub fn ccd_no_zero_toi(scene: &SceneStep, cfg: &PipelineConfig) -> Result<CcdReport, PipelineError> {
    cfg.validate()?;
    with_pool(cfg.threads, || {
        let mut first_cfg = *cfg;
        first_cfg.narrow.min_separation = MinSeparation::Relative(cfg.min_sep_fraction);
        first_cfg.narrow.no_zero_toi = false;
        let first = run(scene, &first_cfg)?;
        if first.toi.toi != Some(0.0) {
            return Ok(first);
        }
        let mut retry_cfg = *cfg;
        retry_cfg.narrow.min_separation = MinSeparation::Absolute(0.0);
        retry_cfg.narrow.no_zero_toi = true;
        let mut retry = run(scene, &retry_cfg)?;
        retry.times.add(&first.times);
        retry.tracked_peak_bytes = retry.tracked_peak_bytes.max(first.tracked_peak_bytes);
        retry.retried = true;
        retry.raw_retry_toi = retry.toi.toi;
        retry.toi.toi = retry.toi.toi.map(|t| t * RETRY_SCALE);
        Ok(retry)
    })
}

/// Running byte count of live pipeline structures.
#[derive(Default)]
struct Tracker {
    live: u64,
    peak: u64,
}

impl Tracker {
    fn alloc(&mut self, bytes: usize) {
        self.live += bytes as u64;
        self.peak = self.peak.max(self.live);
    }

    fn free(&mut self, bytes: usize) {
        self.live -= bytes as u64;
    }
}

fn run(scene: &SceneStep, cfg: &PipelineConfig) -> Result<CcdReport, PipelineError> {
    let start = Instant::now();
    let mut times = StageTimes::default();
    let mut mem = Tracker::default();

    let t = Instant::now();
    let boxes = build_boxes(scene, cfg.inflation)?;
    mem.alloc(boxes.len() * size_of::<Aabb>());
    times.boxes = t.elapsed();

    let mut out = Batched::default();
    run_batched(scene, &boxes, cfg, &mut times, &mut mem, &mut out)?;

    let t = Instant::now();
    out.candidates.sort_unstable();
    times.broad += t.elapsed();
    times.total = start.elapsed();
    Ok(CcdReport {
        toi: ToiResult { toi: out.toi, tolerance_hit: out.tolerance_hit },
        candidate_count: out.candidates.len(),
        candidates: out.candidates,
        query_count: out.queries,
        batch_count: out.narrow_batches,
        broad_batches: out.broad_batches,
        times,
        tracked_peak_bytes: mem.peak,
        zero_unsplittable: out.zero_unsplittable,
        retried: false,
        raw_retry_toi: None,
    })
}

#[derive(Default)]
struct Batched {
    toi: Option<f64>,
    tolerance_hit: bool,
    zero_unsplittable: bool,
    candidates: Vec<CandidatePair>,
    queries: usize,
    broad_batches: usize,
    narrow_batches: usize,
}

fn run_batched(
    scene: &SceneStep,
    boxes: &[Aabb],
    cfg: &PipelineConfig,
    times: &mut StageTimes,
    mem: &mut Tracker,
    out: &mut Batched,
) -> Result<(), PipelineError> {
    let sizes = &cfg.record_sizes;
    let budget = cfg.memory_budget;
    let capacity = usize::try_from(sizes.candidate_capacity(budget)).unwrap_or(usize::MAX);
    if capacity == 0 {
        return Err(PipelineError::BudgetTooSmall { budget, what: "a single candidate".into() });
    }

    let t = Instant::now();
    let order = SweepOrder::new(boxes);
    mem.alloc(order.len() * size_of::<u32>());
    times.broad += t.elapsed();

    // Depth-first, left half first, so batches run in box order.
    let mut ranges: Vec<Range<usize>> = vec![];
    ranges.push(0..order.len());
    while let Some(range) = ranges.pop() {
        let t = Instant::now();
        let attempt = cfg.broad_method.run_batch(&order, range.clone(), capacity);
        times.broad += t.elapsed();
        let batch = match attempt {
            Ok(batch) => batch,
            Err(_) if range.len() > 1 => {
                let mid = range.start + range.len() / 2;
                ranges.push(mid..range.end);
                ranges.push(range.start..mid);
                continue;
            }
            Err(_) => {
                return Err(PipelineError::BudgetTooSmall {
                    budget,
                    what: "the candidates of a single box".into(),
                })
            }
        };
        out.broad_batches += 1;
        let batch_bytes = batch.len() * size_of::<CandidatePair>();
        mem.alloc(batch_bytes);

        let t = Instant::now();
        let (mut queries, ee) = classify(&batch, scene)?;
        queries.extend(ee);
        times.classify += t.elapsed();
        let query_bytes = queries.len() * size_of::<NarrowQuery>();
        mem.alloc(query_bytes);

        let t = Instant::now();
        let narrow = narrow_batches(&queries, cfg, mem, out);
        times.narrow += t.elapsed();
        narrow?;

        out.queries += queries.len();
        mem.free(query_bytes);
        // The batch stays alive as part of the reported union.
        out.candidates.extend(batch);
    }
    Ok(())
}

fn narrow_batches(
    queries: &[NarrowQuery],
    cfg: &PipelineConfig,
    mem: &mut Tracker,
    out: &mut Batched,
) -> Result<(), PipelineError> {
    let sizes = &cfg.record_sizes;
    let budget = cfg.memory_budget;
    if queries.is_empty() {
        out.narrow_batches += 1;
        return Ok(());
    }
    let mut ranges: Vec<Range<usize>> = vec![];
    ranges.push(0..queries.len());
    while let Some(range) = ranges.pop() {
        let remaining = budget
            .saturating_sub(sizes.params)
            .saturating_sub(range.len() as u64 * sizes.query);
        let limits = NarrowLimits {
            initial_toi: out.toi,
            queue_capacity: usize::try_from(remaining / sizes.interval).unwrap_or(usize::MAX),
        };
        match narrow_phase_with(&queries[range.clone()], &cfg.narrow, &limits) {
            Ok(res) => {
                out.narrow_batches += 1;
                let queue_bytes = res.stats.max_queue * size_of::<IntervalBox>();
                mem.alloc(queue_bytes);
                mem.free(queue_bytes);
                if let Some(t) = res.toi {
                    out.toi = Some(out.toi.map_or(t, |m| m.min(t)));
                }
                out.tolerance_hit |= res.per_query.iter().any(|r| r.tolerance_hit);
                out.zero_unsplittable |= res.stats.zero_unsplittable;
            }
            Err(NarrowError::QueueOverflow { .. }) if range.len() > 1 => {
                let mid = range.start + range.len() / 2;
                ranges.push(mid..range.end);
                ranges.push(range.start..mid);
            }
            Err(NarrowError::QueueOverflow { needed, capacity }) => {
                return Err(PipelineError::BudgetTooSmall {
                    budget,
                    what: format!("one query's interval queue ({needed} > {capacity} intervals)"),
                })
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}
