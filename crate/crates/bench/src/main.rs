use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use stq_bench::{
    label_frames, loglog_slope, run_benchmark, scaling_probe, thread_scaling, write_report, BenchError, Format,
    FrameInput, RunSpec,
};
use stq_ccd::broadphase::Method;
use stq_ccd::geometry::io::{load_frame_pair, read_manifest, write_obj, FramePair};
use stq_ccd::narrowphase::NarrowConfig;
use stq_ccd::pipeline::PipelineConfig;
use stq_ccd::scenegen;

/// Benchmark and audit conservative CCD on OBJ frame pairs.
///
/// Exit status: 0 on success, 1 when `--oracle` finds a false negative for a
/// conservative method, 2 on input errors.
#[derive(Debug, Parser)]
#[command(name = "stq-bench", version)]
struct Cli {
    /// OBJ file at t = 0 (repeatable; pairs with --t1 in order).
    #[arg(long)]
    t0: Vec<PathBuf>,
    /// OBJ file at t = 1.
    #[arg(long)]
    t1: Vec<PathBuf>,
    /// JSON array of {"t0", "t1", "scene"?} frame pairs.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write a synthetic frame pair to this directory and add it to the run:
    /// `cloth:<side>:<motion>`, `strip:<length>:<motion>` (a `length x 2`
    /// ribbon) or `soup:<triangles>:<motion>`.
    #[arg(long, value_name = "KIND:N:MOTION")]
    generate: Vec<String>,
    /// Broad-phase method (repeatable).
    #[arg(long = "method", default_values_t = [Method::Stq])]
    methods: Vec<Method>,
    /// Codomain width tolerance of the narrow phase.
    #[arg(long, default_value_t = NarrowConfig::default().delta)]
    delta: f64,
    /// Minimum separation as a fraction of the initial distance (used with
    /// --no-zero-toi).
    #[arg(long, default_value_t = 0.2)]
    min_sep_fraction: f64,
    /// Memory budget in bytes.
    #[arg(long)]
    memory_budget: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Compare candidates against exact ground truth.
    #[arg(long)]
    oracle: bool,
    /// Apply the minimum-separation / no-zero impact time policy.
    #[arg(long)]
    no_zero_toi: bool,
    /// Seed for generated scenes and subsampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Output file (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Zero every timing column.
    #[arg(long)]
    no_timing: bool,
    /// Timed repetitions per cell.
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Run a scaling probe over these box fractions instead, e.g.
    /// `0.125,0.25,0.5,1`.
    #[arg(long, value_delimiter = ',')]
    scaling: Option<Vec<f64>>,
    /// Time the broad phase at these thread counts instead, e.g. `1,2,4,8`.
    #[arg(long, value_delimiter = ',')]
    thread_scaling: Option<Vec<usize>>,
    /// Audit self-test: keep only this many candidates before comparing
    /// against ground truth.
    #[arg(long, value_name = "N")]
    truncate_candidates: Option<usize>,
}

fn frames(cli: &Cli) -> Result<Vec<FrameInput>, String> {
    if cli.t0.len() != cli.t1.len() {
        return Err(format!("{} --t0 files but {} --t1 files", cli.t0.len(), cli.t1.len()));
    }
    let mut pairs: Vec<FramePair> =
        cli.t0.iter().zip(&cli.t1).map(|(a, b)| FramePair { t0: a.clone(), t1: b.clone(), scene: None }).collect();
    if let Some(m) = &cli.manifest {
        pairs.extend(read_manifest(m).map_err(|e| e.to_string())?);
    }
    for (i, g) in cli.generate.iter().enumerate() {
        pairs.push(generate(g, cli.seed, i)?);
    }
    if pairs.is_empty() {
        return Err("no input: pass --t0/--t1, --manifest or --generate".into());
    }
    Ok(label_frames(pairs))
}

fn generate(spec: &str, seed: u64, i: usize) -> Result<FramePair, String> {
    let bad = || format!("bad --generate {spec:?}: expected cloth|strip|soup:<n>:<motion>");
    let parts: Vec<&str> = spec.split(':').collect();
    let [kind, n, motion] = parts[..] else { return Err(bad()) };
    let n: usize = n.parse().map_err(|_| bad())?;
    let motion: f64 = motion.parse().map_err(|_| bad())?;
    let scene = match kind {
        "cloth" if n >= 2 => scenegen::cloth(n, seed, motion),
        "strip" if n >= 2 => scenegen::cloth_strip(n, 2, seed, motion),
        "soup" if n >= 1 => scenegen::soup(n, seed, 1.0, 1.0 / (n as f64).cbrt(), motion),
        _ => return Err(bad()),
    };
    let dir = std::env::temp_dir().join(format!("stq-bench-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let name = format!("{kind}{n}_{seed}_{i}");
    let (t0, t1) = (dir.join(format!("{name}_0.obj")), dir.join(format!("{name}_1.obj")));
    std::fs::write(&t0, write_obj(&scene, false)).map_err(|e| e.to_string())?;
    std::fs::write(&t1, write_obj(&scene, true)).map_err(|e| e.to_string())?;
    Ok(FramePair { t0, t1, scene: Some(format!("{kind}{n}")) })
}

fn emit<R: serde::Serialize + Clone>(rows: &[R], cli: &Cli) -> Result<(), BenchError> {
    match &cli.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|source| BenchError::File { path: path.clone(), source })?;
            write_report(rows, io::BufWriter::new(file), cli.format)
        }
        None => write_report(rows, io::stdout().lock(), cli.format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("stq-bench: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, String> {
    let frames = frames(cli)?;
    let mut pipeline = PipelineConfig {
        broad_method: cli.methods[0],
        min_sep_fraction: cli.min_sep_fraction,
        threads: cli.threads,
        ..Default::default()
    };
    pipeline.narrow.delta = cli.delta;
    if let Some(b) = cli.memory_budget {
        pipeline.memory_budget = b;
    }
    pipeline.validate().map_err(|e| e.to_string())?;

    if cli.scaling.is_some() || cli.thread_scaling.is_some() {
        return probes(cli, &frames, &pipeline);
    }

    let spec = RunSpec {
        frames,
        methods: cli.methods.clone(),
        pipeline,
        oracle_enabled: cli.oracle,
        no_zero_toi: cli.no_zero_toi,
        repetitions: cli.reps,
        no_timing: cli.no_timing,
        truncate_candidates: cli.truncate_candidates,
        ..Default::default()
    };
    let run = run_benchmark(&spec).map_err(|e| e.to_string())?;
    for f in &run.failures {
        eprintln!("stq-bench: {}/{}: {}", f.frame.scene, f.frame.frame, f.error);
    }
    if run.indeterminate > 0 {
        eprintln!("stq-bench: {} oracle verdicts indeterminate (excluded)", run.indeterminate);
    }
    if !run.rows.is_empty() {
        emit(&run.rows, cli).map_err(|e| e.to_string())?;
    }
    if run.has_false_negatives() {
        let total: usize = run.rows.iter().filter_map(|r| r.fn_).sum();
        eprintln!("stq-bench: audit failed: {total} false negatives");
        return Ok(ExitCode::from(1));
    }
    Ok(if run.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn probes(cli: &Cli, frames: &[FrameInput], cfg: &PipelineConfig) -> Result<ExitCode, String> {
    for f in frames {
        let scene = load_frame_pair(&f.t0, &f.t1).map_err(|e| e.to_string())?;
        if let Some(fractions) = &cli.scaling {
            let rows = scaling_probe(&scene, fractions, cfg, cli.seed, cli.reps).map_err(|e| e.to_string())?;
            let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.boxes as f64, r.t_broad)).collect();
            if pts.len() >= 2 {
                eprintln!("{}/{}: broad-phase log-log slope {:.3}", f.scene, f.frame, loglog_slope(&pts));
            }
            emit(&rows, cli).map_err(|e| e.to_string())?;
        }
        if let Some(threads) = &cli.thread_scaling {
            let rows = thread_scaling(&scene, cfg.broad_method, threads, cli.reps).map_err(|e| e.to_string())?;
            emit(&rows, cli).map_err(|e| e.to_string())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
