//! Single-pass continual-learning protocol: each example is seen once, tasks
//! arrive in order, and the evaluation matrix is filled after every task.

use alloc::vec::Vec;

use crate::error::{invalid_input, Result};
use crate::learners::Learner;
use crate::metrics::{evaluate_learner, AlignmentProbe, AlignmentTrace, EvalFill, EvalMatrix, RunMetrics};
use crate::streams::TaskStream;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProtocolOptions {
    pub fill: EvalFill,
    /// Evaluate every task at initialization (needed for FTI).
    pub baseline: bool,
    /// Run the alignment probe with this seed.
    pub probe_seed: Option<u64>,
}

impl ProtocolOptions {
    pub fn full() -> Self {
        Self { fill: EvalFill::Full, baseline: true, probe_seed: None }
    }
}

/// Emitted after each task completes.
#[derive(Debug, Clone, Copy)]
pub struct TaskDone<'a> {
    pub task: usize,
    pub steps: u64,
    /// Mean training loss over the task's examples.
    pub mean_loss: f64,
    pub row: &'a [Option<f64>],
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub matrix: EvalMatrix,
    pub metrics: RunMetrics,
    pub alignment: Option<AlignmentTrace>,
}

pub fn run_protocol(learner: &mut Learner, stream: &TaskStream, options: ProtocolOptions) -> Result<RunOutcome> {
    run_protocol_with(learner, stream, options, |_| {})
}

/// [`run_protocol`] with a per-task callback, e.g. for progress output.
pub fn run_protocol_with(
    learner: &mut Learner,
    stream: &TaskStream,
    options: ProtocolOptions,
    mut on_task: impl FnMut(TaskDone<'_>),
) -> Result<RunOutcome> {
    let t = stream.task_count();
    if t == 0 {
        return Err(invalid_input!("stream has no tasks"));
    }
    if t > learner.task_count() {
        return Err(invalid_input!("stream has {t} tasks, learner was built for {}", learner.task_count()));
    }
    for (i, task) in stream.tasks.iter().enumerate() {
        if task.task_id != i {
            return Err(invalid_input!("task at position {i} has id {}", task.task_id));
        }
    }
    let all: Vec<usize> = (0..t).collect();
    let mut matrix = EvalMatrix::new(t);
    if options.baseline {
        for (j, a) in evaluate_learner(learner, stream, &all)? {
            matrix.set_baseline(j, a)?;
        }
    }
    let mut probe = options.probe_seed.map(AlignmentProbe::new);
    for (i, task) in stream.tasks.iter().enumerate() {
        let mut loss_sum = 0.0;
        for ex in &task.train {
            if let Some(p) = probe.as_mut() {
                p.observe(learner, learner.steps(), ex)?;
            }
            loss_sum += learner.step(ex)?.loss;
        }
        for (j, a) in evaluate_learner(learner, stream, &options.fill.columns(i, t))? {
            matrix.set(i, j, a)?;
        }
        on_task(TaskDone {
            task: i,
            steps: learner.steps(),
            mean_loss: loss_sum / task.train.len().max(1) as f64,
            row: matrix.row(i),
        });
    }
    Ok(RunOutcome { metrics: RunMetrics::from_matrix(&matrix)?, matrix, alignment: probe.map(AlignmentProbe::into_trace) })
}
