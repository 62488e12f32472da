//! Seed sweeps: build streams and learners, run them on worker threads and
//! write per-seed rows plus a summary.

use std::fs;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use mer_core::learners::{describe, Learner};
use mer_core::metrics::{mean_std, AlignmentTrace, EvalFill, EvalMatrix};
use mer_core::protocol::{run_protocol_with, ProtocolOptions};
use mer_core::rng::{SeedSource, SeedStreams};
use mer_core::streams::{build_stream, BaseData};
use mer_core::{NetworkSpec, StreamSpec, TaskStream};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentSpec;
use crate::idx::{load_mnist, mnist_paths, IdxError};
use crate::snapshot::write_snapshot;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("missing data file {path} (set --data-dir or MER_DATA_DIR; see scripts/fetch_mnist.sh)")]
    MissingData { path: PathBuf },
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("writing {path}: {message}")]
    Write { path: PathBuf, message: String },
    #[error("self-validation failed: {0}")]
    Validation(String),
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Io { context, source }
}

/// One CSV row. Accuracies and transfer metrics are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub algorithm: String,
    pub benchmark: String,
    pub buffer: usize,
    #[serde(rename = "RA")]
    pub ra: f64,
    #[serde(rename = "LA")]
    pub la: f64,
    #[serde(rename = "BTI")]
    pub bti: f64,
    #[serde(rename = "FTI")]
    pub fti: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub record: RunRecord,
    pub matrix: EvalMatrix,
    pub alignment: Option<AlignmentTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, std) = mean_std(values.iter().copied());
        Some(Stat { mean, std, n: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    #[serde(rename = "RA")]
    pub ra: Option<Stat>,
    #[serde(rename = "LA")]
    pub la: Option<Stat>,
    #[serde(rename = "BTI")]
    pub bti: Option<Stat>,
    #[serde(rename = "FTI")]
    pub fti: Option<Stat>,
}

impl MetricSummary {
    pub fn from_records(rows: &[RunRecord]) -> Self {
        let col = |f: fn(&RunRecord) -> Option<f64>| Stat::of(&rows.iter().filter_map(f).collect::<Vec<_>>());
        MetricSummary {
            ra: col(|r| Some(r.ra)),
            la: col(|r| Some(r.la)),
            bti: col(|r| Some(r.bti)),
            fti: col(|r| r.fti),
        }
    }

    /// Largest absolute difference between matching statistics; infinite if their presence differs.
    pub fn max_difference(&self, other: &MetricSummary) -> f64 {
        let pairs = [(&self.ra, &other.ra), (&self.la, &other.la), (&self.bti, &other.bti), (&self.fti, &other.fti)];
        pairs
            .iter()
            .map(|(a, b)| match (a, b) {
                (None, None) => 0.0,
                (Some(a), Some(b)) if a.n == b.n => (a.mean - b.mean).abs().max((a.std - b.std).abs()),
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedSeed {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub benchmark: String,
    pub algorithm: String,
    pub buffer: usize,
    pub learner: String,
    pub seeds: Vec<u64>,
    pub completed: usize,
    pub failed: Vec<FailedSeed>,
    pub metrics: MetricSummary,
    /// Mean and spread of the per-seed mean gradient dot product.
    pub alignment: Option<Stat>,
    /// Kept apart so everything else is reproducible byte for byte.
    pub timing: Timing,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub outcomes: Vec<SeedOutcome>,
    pub failed: Vec<FailedSeed>,
    pub summary: Summary,
}

impl ExperimentResult {
    pub fn records(&self) -> Vec<RunRecord> {
        self.outcomes.iter().map(|o| o.record.clone()).collect()
    }
}

/// Shared, read-only inputs for every worker.
#[derive(Debug, Clone)]
pub struct DataContext {
    pub base: Option<Arc<BaseData>>,
}

impl DataContext {
    /// Loads MNIST when any spec needs it. Missing files fail here, before training.
    pub fn for_specs(specs: &[ExperimentSpec]) -> Result<Self, RunError> {
        let Some(spec) = specs.iter().find(|s| s.benchmark.needs_mnist()) else {
            return Ok(Self { base: None });
        };
        check_data_files(&spec.data_dir)?;
        Ok(Self { base: Some(Arc::new(load_mnist(&spec.data_dir)?)) })
    }
}

pub fn check_data_files(dir: &Path) -> Result<(), RunError> {
    for path in mnist_paths(dir) {
        if !path.is_file() {
            return Err(RunError::MissingData { path });
        }
    }
    Ok(())
}

/// Stream for one run: the shape of `spec.stream` with a seed derived from `seed`.
pub fn stream_for_seed(spec: &ExperimentSpec, seed: u64, data: &DataContext) -> mer_core::Result<TaskStream> {
    let stream = StreamSpec { seed: SeedStreams::new(seed).seed(SeedSource::Stream), ..spec.stream };
    build_stream(&stream, data.base.as_deref())
}

/// Trains and evaluates one seed.
pub fn run_seed(spec: &ExperimentSpec, seed: u64, data: &DataContext) -> mer_core::Result<(SeedOutcome, Learner)> {
    let start = Instant::now();
    let stream = stream_for_seed(spec, seed, data)?;
    let base = NetworkSpec::new(stream.input_dim(), &spec.hidden, stream_classes(&stream))?;
    let config = mer_core::learners::LearnerConfig { seed, ..spec.learner.clone() };
    let mut learner = Learner::new(config, &base, stream.task_count())?;
    let options = ProtocolOptions {
        fill: if spec.probes.eval_matrix { EvalFill::Full } else { EvalFill::Sparse },
        baseline: true,
        probe_seed: spec.probes.alignment.then(|| SeedStreams::new(seed).seed(SeedSource::Probe)),
    };
    let out = run_protocol_with(&mut learner, &stream, options, |_| {})?;
    let m = out.metrics;
    let record = RunRecord {
        seed,
        algorithm: spec.algorithm().name().to_owned(),
        benchmark: spec.benchmark.short().to_owned(),
        buffer: spec.buffer(),
        ra: 100.0 * m.retained,
        la: 100.0 * m.learning,
        bti: 100.0 * m.backward,
        fti: m.forward.map(|f| 100.0 * f),
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((SeedOutcome { record, matrix: out.matrix, alignment: out.alignment }, learner))
}

fn stream_classes(stream: &TaskStream) -> usize {
    stream.train_examples().map(|e| e.y + 1).max().unwrap_or(1).max(match stream.kind {
        mer_core::StreamKind::Synthetic => 2,
        _ => 10,
    })
}

/// Runs `f` over `jobs` on up to `threads` workers; results keep job order.
pub fn parallel_map<J: Sync, R: Send>(jobs: &[J], threads: usize, f: impl Fn(&J) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = f(job);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("workers finished").into_iter().map(|r| r.expect("every job ran")).collect()
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

type SeedResult = Result<(SeedOutcome, Option<Vec<u8>>), String>;

fn run_seed_isolated(spec: &ExperimentSpec, seed: u64, data: &DataContext) -> SeedResult {
    let run = catch_unwind(AssertUnwindSafe(|| run_seed(spec, seed, data)));
    match run {
        Ok(Ok((outcome, learner))) => {
            let snapshot = spec.save_buffer.then(|| {
                let mut bytes = Vec::new();
                write_snapshot(&mut bytes, learner.reservoir()).expect("writing to memory cannot fail");
                bytes
            });
            Ok((outcome, snapshot))
        }
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "worker panicked".into())),
    }
}

/// Runs every seed of every spec, writes each spec's result files and returns the results.
pub fn run_experiments(
    specs: &[ExperimentSpec],
    threads: usize,
    progress: impl Fn(&str) + Sync,
) -> Result<Vec<ExperimentResult>, RunError> {
    let data = DataContext::for_specs(specs)?;
    for spec in specs {
        fs::create_dir_all(&spec.output_dir).map_err(io_err(format!("creating {}", spec.output_dir.display())))?;
    }
    let start = Instant::now();
    let jobs: Vec<(usize, u64)> =
        specs.iter().enumerate().flat_map(|(i, s)| s.seeds.iter().map(move |&seed| (i, seed))).collect();
    let results = parallel_map(&jobs, threads, |&(i, seed)| {
        let spec = &specs[i];
        let r = run_seed_isolated(spec, seed, &data);
        let line = match &r {
            Ok((o, _)) => format!(
                "{} seed {seed}: RA {:.2} LA {:.2} BTI {:.2} ({:.0}s)",
                spec.output_dir.display(),
                o.record.ra,
                o.record.la,
                o.record.bti,
                o.record.wall_seconds
            ),
            Err(e) => format!("{} seed {seed}: FAILED: {e}", spec.output_dir.display()),
        };
        progress(&line);
        r
    });
    let total = start.elapsed().as_secs_f64();

    let mut grouped: Vec<Vec<(u64, SeedResult)>> = specs.iter().map(|_| Vec::new()).collect();
    for ((i, seed), r) in jobs.into_iter().zip(results) {
        grouped[i].push((seed, r));
    }
    specs.iter().zip(grouped).map(|(spec, runs)| finish_experiment(spec, runs, total)).collect()
}

pub fn run_experiment(spec: &ExperimentSpec, threads: usize, progress: impl Fn(&str) + Sync) -> Result<ExperimentResult, RunError> {
    Ok(run_experiments(std::slice::from_ref(spec), threads, progress)?.remove(0))
}

fn finish_experiment(spec: &ExperimentSpec, mut runs: Vec<(u64, SeedResult)>, total: f64) -> Result<ExperimentResult, RunError> {
    runs.sort_by_key(|(seed, _)| *seed);
    let mut outcomes = Vec::new();
    let mut failed = Vec::new();
    for (seed, r) in runs {
        match r {
            Ok((outcome, snapshot)) => {
                if let Some(bytes) = snapshot {
                    let path = spec.output_dir.join(format!("buffer_seed{seed}.bin"));
                    fs::write(&path, bytes).map_err(io_err(format!("writing {}", path.display())))?;
                }
                outcomes.push(outcome);
            }
            Err(error) => failed.push(FailedSeed { seed, error }),
        }
    }
    let records: Vec<RunRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let alignment_means: Vec<f64> =
        outcomes.iter().filter_map(|o| o.alignment.as_ref()).map(|t| t.summary().0).collect();
    let summary = Summary {
        benchmark: spec.benchmark.short().to_owned(),
        algorithm: spec.algorithm().name().to_owned(),
        buffer: spec.buffer(),
        learner: describe(&spec.learner),
        seeds: spec.seeds.clone(),
        completed: records.len(),
        failed: failed.clone(),
        metrics: MetricSummary::from_records(&records),
        alignment: Stat::of(&alignment_means),
        timing: Timing { wall_seconds_total: total },
    };
    let result = ExperimentResult { spec: spec.clone(), outcomes, failed, summary };
    write_results(&result)?;
    validate_dir(&spec.output_dir)?;
    Ok(result)
}

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> RunError + '_ {
    move |e| RunError::Write { path: path.to_owned(), message: e.to_string() }
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    for r in records {
        w.serialize(r).map_err(csv_error(path))?;
    }
    w.flush().map_err(io_err(format!("writing {}", path.display())))
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, RunError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_error(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), RunError> {
    let file = fs::File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)
        .map_err(|e| RunError::Write { path: path.to_owned(), message: e.to_string() })
}

fn write_results(result: &ExperimentResult) -> Result<(), RunError> {
    let dir = &result.spec.output_dir;
    write_records(&dir.join(RESULTS_CSV), &result.records())?;
    write_json(&dir.join(SUMMARY_JSON), &result.summary)?;
    for o in &result.outcomes {
        let seed = o.record.seed;
        write_matrix(&dir.join(format!("matrix_seed{seed}.csv")), &o.matrix)?;
        if let Some(trace) = &o.alignment {
            let path = dir.join(format!("alignment_seed{seed}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(csv_error(&path))?;
            w.write_record(["step", "mean_dot"]).map_err(csv_error(&path))?;
            for r in &trace.samples {
                w.write_record([r.step.to_string(), r.mean_dot.to_string()]).map_err(csv_error(&path))?;
            }
            w.flush().map_err(io_err(format!("writing {}", path.display())))?;
        }
    }
    Ok(())
}

/// Rows `after_task` and `baseline`; cells that were not evaluated are empty.
fn write_matrix(path: &Path, m: &EvalMatrix) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    let t = m.task_count();
    let mut header = vec!["after_task".to_owned()];
    header.extend((0..t).map(|j| format!("task{j}")));
    w.write_record(&header).map_err(csv_error(path))?;
    let cell = |v: Option<f64>| v.map_or(String::new(), |a| format!("{:.4}", 100.0 * a));
    let mut row = vec!["baseline".to_owned()];
    row.extend((0..t).map(|j| cell(m.baseline(j))));
    w.write_record(&row).map_err(csv_error(path))?;
    for i in 0..t {
        let mut row = vec![i.to_string()];
        row.extend(m.row(i).iter().map(|&v| cell(v)));
        w.write_record(&row).map_err(csv_error(path))?;
    }
    w.flush().map_err(io_err(format!("writing {}", path.display())))
}

/// Recomputes the summary from the CSV rows and compares it with the JSON summary.
pub fn validate_dir(dir: &Path) -> Result<Summary, RunError> {
    let records = read_records(&dir.join(RESULTS_CSV))?;
    let path = dir.join(SUMMARY_JSON);
    let text = fs::read_to_string(&path).map_err(io_err(format!("reading {}", path.display())))?;
    let summary: Summary = serde_json::from_str(&text)
        .map_err(|e| RunError::Validation(format!("{}: {e}", path.display())))?;
    let recomputed = MetricSummary::from_records(&records);
    // CSV floats round-trip exactly, so the only slack needed is summation order.
    let diff = recomputed.max_difference(&summary.metrics);
    if diff > 1e-9 {
        return Err(RunError::Validation(format!("{}: summary differs from rows by {diff}", dir.display())));
    }
    if summary.completed != records.len() {
        return Err(RunError::Validation(format!(
            "{}: summary counts {} runs, CSV has {}",
            dir.display(),
            summary.completed,
            records.len()
        )));
    }
    Ok(summary)
}
