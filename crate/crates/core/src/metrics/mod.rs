//! Evaluation matrix, scalar continual-learning metrics and the gradient
//! alignment probe.
//!
//! Accuracies are stored in `[0, 1]`; callers format them as percentages.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;

use crate::error::{invalid_input, Error, Result};
use crate::learners::Learner;
use crate::nn::{argmax, dot, ParamVector, Workspace};
use crate::rng::{rng_from_seed, Rng};
use crate::streams::{Example, TaskStream, TestSet};

/// Which cells of the matrix a run fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalFill {
    /// Every task after every task.
    #[default]
    Full,
    /// Only the cells the scalar metrics read: `R[i][i]`, `R[i][i+1]` and the final row.
    Sparse,
}

impl EvalFill {
    /// Tasks to evaluate after finishing task `i` of `t`.
    pub fn columns(self, i: usize, t: usize) -> Vec<usize> {
        match self {
            EvalFill::Full => (0..t).collect(),
            EvalFill::Sparse if i + 1 == t => (0..t).collect(),
            EvalFill::Sparse => vec![i, i + 1],
        }
    }
}

/// `R[i][j]`: accuracy on task `j` after training on task `i`; `b[j]`: accuracy at initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMatrix {
    task_count: usize,
    cells: Vec<Option<f64>>,
    baseline: Vec<Option<f64>>,
}

impl EvalMatrix {
    pub fn new(task_count: usize) -> Self {
        Self { task_count, cells: vec![None; task_count * task_count], baseline: vec![None; task_count] }
    }

    /// Fully populated matrix, e.g. for tests and reports.
    pub fn from_rows(rows: &[Vec<f64>], baseline: Option<&[f64]>) -> Result<Self> {
        let t = rows.len();
        let mut m = Self::new(t);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != t {
                return Err(invalid_input!("row {i} has {} entries, expected {t}", row.len()));
            }
            for (j, &a) in row.iter().enumerate() {
                m.set(i, j, a)?;
            }
        }
        if let Some(b) = baseline {
            if b.len() != t {
                return Err(invalid_input!("baseline has {} entries, expected {t}", b.len()));
            }
            for (j, &a) in b.iter().enumerate() {
                m.set_baseline(j, a)?;
            }
        }
        Ok(m)
    }

    pub fn task_count(&self) -> usize {
        self.task_count
    }

    fn check(&self, j: usize, accuracy: f64) -> Result<()> {
        if j >= self.task_count {
            return Err(invalid_input!("task {j} outside {} tasks", self.task_count));
        }
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(invalid_input!("accuracy {accuracy} outside [0, 1]"));
        }
        Ok(())
    }

    pub fn set(&mut self, i: usize, j: usize, accuracy: f64) -> Result<()> {
        self.check(i, accuracy)?;
        self.check(j, accuracy)?;
        self.cells[i * self.task_count + j] = Some(accuracy);
        Ok(())
    }

    pub fn set_baseline(&mut self, j: usize, accuracy: f64) -> Result<()> {
        self.check(j, accuracy)?;
        self.baseline[j] = Some(accuracy);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (i < self.task_count && j < self.task_count).then(|| self.cells[i * self.task_count + j]).flatten()
    }

    pub fn baseline(&self, j: usize) -> Option<f64> {
        self.baseline.get(j).copied().flatten()
    }

    fn need(&self, i: usize, j: usize) -> Result<f64> {
        self.get(i, j).ok_or_else(|| Error::State(alloc::format!("R[{i}][{j}] not evaluated")))
    }

    fn need_baseline(&self, j: usize) -> Result<f64> {
        self.baseline(j).ok_or_else(|| Error::State(alloc::format!("b[{j}] not evaluated")))
    }

    fn last(&self) -> Result<usize> {
        self.task_count.checked_sub(1).ok_or_else(|| invalid_input!("empty evaluation matrix"))
    }

    /// Row `i` with unevaluated cells as `None`.
    pub fn row(&self, i: usize) -> &[Option<f64>] {
        &self.cells[i * self.task_count..(i + 1) * self.task_count]
    }
}

/// Mean of `R[T-1][j]`.
pub fn retained_accuracy(m: &EvalMatrix) -> Result<f64> {
    let last = m.last()?;
    mean((0..m.task_count).map(|j| m.need(last, j)))
}

/// Mean of `R[i][i]`.
pub fn learning_accuracy(m: &EvalMatrix) -> Result<f64> {
    m.last()?;
    mean((0..m.task_count).map(|i| m.need(i, i)))
}

/// Mean of `R[T-1][j] - R[j][j]`.
pub fn backward_transfer(m: &EvalMatrix) -> Result<f64> {
    let last = m.last()?;
    mean((0..m.task_count).map(|j| Ok(m.need(last, j)? - m.need(j, j)?)))
}

/// Mean over `j >= 1` of `R[j-1][j] - b[j]`.
pub fn forward_transfer(m: &EvalMatrix) -> Result<f64> {
    if m.task_count < 2 {
        return Err(invalid_input!("forward transfer needs at least 2 tasks, got {}", m.task_count));
    }
    mean((1..m.task_count).map(|j| Ok(m.need(j - 1, j)? - m.need_baseline(j)?)))
}

fn mean(values: impl Iterator<Item = Result<f64>>) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v?;
        n += 1;
    }
    Ok(sum / n as f64)
}

/// The four scalar metrics of one run; FTI is absent when the baseline row was not evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub retained: f64,
    pub learning: f64,
    pub backward: f64,
    pub forward: Option<f64>,
}

impl RunMetrics {
    pub fn from_matrix(m: &EvalMatrix) -> Result<Self> {
        let forward = match forward_transfer(m) {
            Ok(f) => Some(f),
            Err(Error::State(_)) | Err(Error::InvalidInput(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            retained: retained_accuracy(m)?,
            learning: learning_accuracy(m)?,
            backward: backward_transfer(m)?,
            forward,
        })
    }
}

/// Argmax accuracy of `params` on one test set. Ties go to the lowest class index.
pub fn accuracy(ws: &mut Workspace, params: &ParamVector, test: &TestSet) -> Result<f64> {
    if test.is_empty() {
        return Err(invalid_input!("empty test set for task {}", test.task_id()));
    }
    let spec = params.spec();
    let head = spec.head_for_task(test.task_id())?;
    let mut correct = 0usize;
    let mut bad_input = None;
    test.visit(|ex| {
        if ex.x.len() != spec.input_dim() {
            bad_input = Some(ex.x.len());
            return;
        }
        if argmax(ws.forward(spec, params.values(), &ex.x, head)) == ex.y {
            correct += 1;
        }
    });
    if let Some(len) = bad_input {
        return Err(invalid_input!("test input has {len} features, network expects {}", spec.input_dim()));
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Per-task accuracy of one parameter vector.
pub fn evaluate(params: &ParamVector, test_sets: &[&TestSet]) -> Result<Vec<f64>> {
    if test_sets.is_empty() {
        return Err(invalid_input!("no test sets"));
    }
    let mut ws = Workspace::new(params.spec());
    test_sets.iter().map(|t| accuracy(&mut ws, params, t)).collect()
}

/// Accuracy of a learner on the listed tasks of `stream`, each with its own model or head.
pub fn evaluate_learner(learner: &Learner, stream: &TaskStream, tasks: &[usize]) -> Result<Vec<(usize, f64)>> {
    let mut ws = Workspace::new(learner.spec());
    tasks
        .iter()
        .map(|&j| {
            let test = &stream.tasks.get(j).ok_or_else(|| invalid_input!("no task {j} in stream"))?.test;
            Ok((j, accuracy(&mut ws, learner.params_for_task(j), test)?))
        })
        .collect()
}

/// Number of past examples probed per step.
pub const PROBE_SAMPLES: usize = 5;

/// One probe record: step index and mean dot product against the sampled past gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentRecord {
    pub step: u64,
    pub mean_dot: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignmentTrace {
    pub samples: Vec<AlignmentRecord>,
}

impl AlignmentTrace {
    /// Mean and sample standard deviation of the recorded dot products.
    pub fn summary(&self) -> (f64, f64) {
        mean_std(self.samples.iter().map(|r| r.mean_dot))
    }
}

/// Mean and sample (n - 1) standard deviation; the deviation is 0 for fewer than two values.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let var = values.map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (m, libm::sqrt(var))
}

/// Observer that keeps its own history of every example seen.
///
/// The probe only reads the learner, so training with and without it yields
/// identical parameters.
#[derive(Debug, Clone)]
pub struct AlignmentProbe {
    history: Vec<Example>,
    rng: Rng,
    trace: AlignmentTrace,
}

impl AlignmentProbe {
    pub fn new(probe_seed: u64) -> Self {
        Self { history: Vec::new(), rng: rng_from_seed(probe_seed), trace: AlignmentTrace::default() }
    }

    /// Call with the incoming example before the learner steps on it.
    pub fn observe(&mut self, learner: &Learner, step: u64, example: &Example) -> Result<()> {
        if self.history.len() >= PROBE_SAMPLES {
            let g = learner.gradient(example)?;
            let mut total = 0.0;
            for i in sample(&mut self.rng, self.history.len(), PROBE_SAMPLES) {
                let past = learner.gradient(&self.history[i])?;
                total += dot(g.values(), past.values());
            }
            self.trace.samples.push(AlignmentRecord { step, mean_dot: total / PROBE_SAMPLES as f64 });
        }
        self.history.push(example.clone());
        Ok(())
    }

    pub fn trace(&self) -> &AlignmentTrace {
        &self.trace
    }

    pub fn into_trace(self) -> AlignmentTrace {
        self.trace
    }
}

/// Trains `learner` over `stream` while probing gradient alignment at every step.
pub fn alignment_probe(learner: &mut Learner, stream: &TaskStream, probe_seed: u64) -> Result<AlignmentTrace> {
    let mut probe = AlignmentProbe::new(probe_seed);
    for (step, ex) in stream.train_examples().enumerate() {
        probe.observe(learner, step as u64, ex)?;
        learner.step(ex)?;
    }
    Ok(probe.into_trace())
}
