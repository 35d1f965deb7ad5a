//! Benchmark and audit harness: loads frame pairs, runs broad-phase methods
//! through the full pipeline, compares candidates against exact ground truth
//! and writes per-(frame, method) metrics.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use stq_ccd::broadphase::{classify, CandidatePair, Method};
use stq_ccd::geometry::io::{load_frame_pair, FramePair, SceneIoError};
use stq_ccd::narrowphase::narrow_phase;
use stq_ccd::oracle::{ground_truth_pairs, MIN_PRECISION};
use stq_ccd::pipeline::{ccd, ccd_no_zero_toi, CcdReport, PipelineConfig, PipelineError};
use stq_ccd::{build_boxes, SceneStep};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("run spec needs at least one frame pair")]
    NoFrames,
    #[error("run spec needs at least one method")]
    NoMethods,
    #[error("no rows to write")]
    NoRows,
    #[error(transparent)]
    Scene(#[from] SceneIoError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scaling fractions must lie in (0, 1], got {0}")]
    BadFraction(f64),
}

/// One step to evaluate: a `t = 0` / `t = 1` file pair labelled by scene and
/// frame number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameInput {
    pub scene: String,
    pub frame: usize,
    pub t0: PathBuf,
    pub t1: PathBuf,
}

/// Labels frame pairs: the manifest's scene name if given, else the stem of
/// the `t = 0` file. Frames of one scene are numbered in input order.
pub fn label_frames(pairs: Vec<FramePair>) -> Vec<FrameInput> {
    let mut seen: Vec<(String, usize)> = Vec::new();
    pairs
        .into_iter()
        .map(|p| {
            let scene = p.scene.clone().unwrap_or_else(|| {
                p.t0.file_stem().map_or_else(|| "scene".into(), |s| s.to_string_lossy().into_owned())
            });
            let frame = match seen.iter_mut().find(|(s, _)| *s == scene) {
                Some((_, n)) => {
                    *n += 1;
                    *n - 1
                }
                None => {
                    seen.push((scene.clone(), 1));
                    0
                }
            };
            FrameInput { scene, frame, t0: p.t0, t1: p.t1 }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub frames: Vec<FrameInput>,
    pub methods: Vec<Method>,
    pub pipeline: PipelineConfig,
    pub oracle_enabled: bool,
    pub oracle_precision: u32,
    /// Use the minimum-separation / no-zero policy instead of plain CCD.
    pub no_zero_toi: bool,
    /// Timed repetitions per cell; the median is reported.
    pub repetitions: usize,
    /// Report zero for every timing column.
    pub no_timing: bool,
    /// Fault injection: keep only this many candidates before comparing
    /// against ground truth, as a fixed-size candidate array would.
    pub truncate_candidates: Option<usize>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            frames: Vec::new(),
            methods: vec![Method::Stq],
            pipeline: PipelineConfig::default(),
            oracle_enabled: false,
            oracle_precision: MIN_PRECISION,
            no_zero_toi: false,
            repetitions: 3,
            no_timing: false,
            truncate_candidates: None,
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.frames.is_empty() {
            return Err(BenchError::NoFrames);
        }
        if self.methods.is_empty() {
            return Err(BenchError::NoMethods);
        }
        self.pipeline.validate()?;
        Ok(())
    }
}

/// Metrics of one (frame, method) cell. Times are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scene: String,
    pub frame: usize,
    pub method: String,
    pub candidates: usize,
    /// Candidates that do not collide; needs ground truth.
    pub fp: Option<usize>,
    /// Colliding pairs missing from the candidates; needs ground truth.
    #[serde(rename = "fn")]
    pub fn_: Option<usize>,
    pub t_boxes: f64,
    pub t_broad: f64,
    pub t_classify: f64,
    pub t_narrow: f64,
    pub peak_bytes: u64,
    pub toi: Option<f64>,
}

impl MetricsRow {
    fn key(&self) -> (&str, usize, &str) {
        (&self.scene, self.frame, &self.method)
    }
}

/// Orders rows by `(scene, frame, method)`.
pub fn sort_rows(rows: &mut [MetricsRow]) {
    rows.sort_by(|a, b| a.key().cmp(&b.key()));
}

#[derive(Debug)]
pub struct FrameFailure {
    pub frame: FrameInput,
    pub error: BenchError,
}

#[derive(Debug, Default)]
pub struct BenchRun {
    pub rows: Vec<MetricsRow>,
    /// Frames that could not be loaded or run; the rest still ran.
    pub failures: Vec<FrameFailure>,
    /// Oracle verdicts that stayed indeterminate, summed over frames.
    pub indeterminate: usize,
}

impl BenchRun {
    /// Any conservative method missed a ground-truth collision.
    pub fn has_false_negatives(&self) -> bool {
        self.rows.iter().any(|r| {
            let conservative = r.method.parse::<Method>().is_ok_and(Method::is_conservative);
            conservative && r.fn_.is_some_and(|n| n > 0)
        })
    }
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort_unstable();
    xs[xs.len() / 2]
}

/// Counts `(fp, fn)` of `candidates` against the sorted colliding set.
pub fn confusion(candidates: &[CandidatePair], colliding: &[CandidatePair]) -> (usize, usize) {
    let cands: BTreeSet<_> = candidates.iter().collect();
    let hits = colliding.iter().filter(|p| cands.contains(p)).count();
    (cands.len() - hits, colliding.len() - hits)
}

fn run_cell(scene: &SceneStep, method: Method, spec: &RunSpec) -> Result<(CcdReport, [Duration; 4]), BenchError> {
    let cfg = PipelineConfig { broad_method: method, ..spec.pipeline };
    let mut report = None;
    let mut stages: [Vec<Duration>; 4] = Default::default();
    for _ in 0..spec.repetitions.max(1) {
        let r = if spec.no_zero_toi { ccd_no_zero_toi(scene, &cfg)? } else { ccd(scene, &cfg)? };
        let t = &r.times;
        for (acc, d) in stages.iter_mut().zip([t.boxes, t.broad, t.classify, t.narrow]) {
            acc.push(d);
        }
        report = Some(r);
    }
    Ok((report.expect("at least one repetition"), stages.map(median)))
}

/// Runs every frame × method cell in order. Frames that fail to load are
/// recorded in [`BenchRun::failures`] and skipped.
pub fn run_benchmark(spec: &RunSpec) -> Result<BenchRun, BenchError> {
    spec.validate()?;
    let mut out = BenchRun::default();
    for frame in &spec.frames {
        let scene = match load_frame_pair(&frame.t0, &frame.t1) {
            Ok(s) => s,
            Err(e) => {
                out.failures.push(FrameFailure { frame: frame.clone(), error: e.into() });
                continue;
            }
        };
        let truth = spec.oracle_enabled.then(|| ground_truth_pairs(&scene, spec.oracle_precision));
        if let Some(t) = &truth {
            out.indeterminate += t.indeterminate.len();
        }
        let colliding = truth.as_ref().map(|t| t.colliding_pairs());
        for &method in &spec.methods {
            let (report, times) = match run_cell(&scene, method, spec) {
                Ok(r) => r,
                Err(error) => {
                    out.failures.push(FrameFailure { frame: frame.clone(), error });
                    break;
                }
            };
            let mut candidates = report.candidates;
            if let Some(n) = spec.truncate_candidates {
                candidates.truncate(n);
            }
            let (fp, fn_) = match &colliding {
                Some(c) => {
                    let (fp, fn_) = confusion(&candidates, c);
                    (Some(fp), Some(fn_))
                }
                None => (None, None),
            };
            let secs = |d: Duration| if spec.no_timing { 0.0 } else { d.as_secs_f64() };
            out.rows.push(MetricsRow {
                scene: frame.scene.clone(),
                frame: frame.frame,
                method: method.name().into(),
                candidates: candidates.len(),
                fp,
                fn_,
                t_boxes: secs(times[0]),
                t_broad: secs(times[1]),
                t_classify: secs(times[2]),
                t_narrow: secs(times[3]),
                peak_bytes: report.tracked_peak_bytes,
                toi: report.toi.toi,
            });
        }
    }
    sort_rows(&mut out.rows);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

/// Writes rows sorted by `(scene, frame, method)` as CSV (header plus one
/// line per row) or as a JSON array.
pub fn write_report<W: Write, R: Serialize + Clone>(rows: &[R], out: W, format: Format) -> Result<(), BenchError> {
    if rows.is_empty() {
        return Err(BenchError::NoRows);
    }
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn emit_report(rows: &[MetricsRow], path: &Path, format: Format) -> Result<(), BenchError> {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    let file = File::create(path).map_err(|source| BenchError::File { path: path.into(), source })?;
    write_report(&rows, io::BufWriter::new(file), format)
}

pub fn read_json_report(path: &Path) -> Result<Vec<MetricsRow>, BenchError> {
    let file = File::open(path).map_err(|source| BenchError::File { path: path.into(), source })?;
    Ok(serde_json::from_reader(io::BufReader::new(file))?)
}

/// One subsample of a scaling probe. Times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub fraction: f64,
    pub boxes: usize,
    pub candidates: usize,
    pub t_broad: f64,
    pub t_narrow: f64,
}

/// Runs the broad and narrow phases on random subsamples of the scene's
/// boxes. Subsamples are nested prefixes of one seeded shuffle; times are
/// medians over `repetitions`.
pub fn scaling_probe(
    scene: &SceneStep,
    fractions: &[f64],
    cfg: &PipelineConfig,
    seed: u64,
    repetitions: usize,
) -> Result<Vec<ScalingRow>, BenchError> {
    if let Some(&f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(BenchError::BadFraction(f));
    }
    let boxes = build_boxes(scene, cfg.inflation).map_err(PipelineError::from)?;
    let mut perm: Vec<usize> = (0..boxes.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rows = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let n = ((boxes.len() as f64 * f).round() as usize).clamp(1.min(boxes.len()), boxes.len());
        // Nested random subsets, kept in their original order.
        let mut idx = perm[..n].to_vec();
        idx.sort_unstable();
        let sample: Vec<_> = idx.iter().map(|&i| boxes[i]).collect();
        let sample = &sample[..];
        let mut broad = Vec::new();
        let mut narrow = Vec::new();
        let mut count = 0;
        for _ in 0..repetitions.max(1) {
            let t = Instant::now();
            let cands = cfg.broad_method.run(sample);
            broad.push(t.elapsed());
            count = cands.len();
            let t = Instant::now();
            let (mut q, ee) = classify(&cands, scene).map_err(PipelineError::from)?;
            q.extend(ee);
            narrow_phase(&q, &cfg.narrow).map_err(PipelineError::from)?;
            narrow.push(t.elapsed());
        }
        rows.push(ScalingRow {
            fraction: f,
            boxes: n,
            candidates: count,
            t_broad: median(broad).as_secs_f64(),
            t_narrow: median(narrow).as_secs_f64(),
        });
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadRow {
    pub threads: usize,
    pub t_broad: f64,
    pub speedup: f64,
}

/// Median broad-phase time of `method` on the scene's boxes at each thread
/// count; speedups are relative to the first entry.
pub fn thread_scaling(
    scene: &SceneStep,
    method: Method,
    threads: &[usize],
    repetitions: usize,
) -> Result<Vec<ThreadRow>, BenchError> {
    let boxes = build_boxes(scene, 0.0).map_err(PipelineError::from)?;
    let mut rows: Vec<ThreadRow> = Vec::new();
    for &n in threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
        let times: Vec<Duration> = (0..repetitions.max(1))
            .map(|_| {
                pool.install(|| {
                    let t = Instant::now();
                    std::hint::black_box(method.run(&boxes));
                    t.elapsed()
                })
            })
            .collect();
        let t = median(times).as_secs_f64();
        let speedup = rows.first().map_or(1.0, |r| r.t_broad / t);
        rows.push(ThreadRow { threads: n, t_broad: t, speedup });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scene: &str, frame: usize, method: &str) -> MetricsRow {
        MetricsRow {
            scene: scene.into(),
            frame,
            method: method.into(),
            candidates: 3,
            fp: Some(1),
            fn_: None,
            t_boxes: 0.5,
            t_broad: 0.25,
            t_classify: 0.0,
            t_narrow: 1e-7,
            peak_bytes: 1024,
            toi: Some(0.1),
        }
    }

    #[test]
    fn one_row_is_two_csv_lines() {
        let mut buf = Vec::new();
        write_report(&[row("a,b", 0, "stq")], &mut buf, Format::Csv).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "scene,frame,method,candidates,fp,fn,t_boxes,t_broad,t_classify,t_narrow,peak_bytes,toi"
        );
        assert_eq!(lines[1], "\"a,b\",0,stq,3,1,,0.5,0.25,0.0,1e-7,1024,0.1");
    }

    #[test]
    fn rows_sort_by_scene_frame_method() {
        let mut rows = vec![row("b", 0, "bf"), row("a", 10, "stq"), row("a", 2, "stq"), row("a", 2, "bf")];
        sort_rows(&mut rows);
        let keys: Vec<_> = rows.iter().map(|r| (r.scene.as_str(), r.frame, r.method.as_str())).collect();
        assert_eq!(keys, [("a", 2, "bf"), ("a", 2, "stq"), ("a", 10, "stq"), ("b", 0, "bf")]);
    }

    #[test]
    fn empty_report_is_an_error() {
        assert!(matches!(write_report::<_, MetricsRow>(&[], Vec::new(), Format::Csv), Err(BenchError::NoRows)));
    }

    #[test]
    fn confusion_counts() {
        use stq_ccd::PrimitiveId;
        let p = |a, b| CandidatePair::new(PrimitiveId::edge(a), PrimitiveId::edge(b)).unwrap();
        assert_eq!(confusion(&[p(0, 1), p(0, 2), p(1, 3)], &[p(0, 2), p(4, 5)]), (2, 1));
        assert_eq!(confusion(&[], &[]), (0, 0));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (1..10).map(|i| (i as f64, 3.0 * (i as f64).powf(1.5))).collect();
        assert!((loglog_slope(&pts) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn frames_are_labelled_per_scene() {
        let fp = |t0: &str, scene: Option<&str>| FramePair { t0: t0.into(), t1: "x.obj".into(), scene: scene.map(Into::into) };
        let frames = label_frames(vec![fp("d/a.obj", None), fp("b.obj", Some("s")), fp("c.obj", Some("s")), fp("a.obj", None)]);
        let got: Vec<_> = frames.iter().map(|f| (f.scene.as_str(), f.frame)).collect();
        assert_eq!(got, [("a", 0), ("s", 0), ("s", 1), ("a", 1)]);
    }
}
