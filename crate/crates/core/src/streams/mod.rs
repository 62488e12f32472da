//! Locally i.i.d. task streams.
//!
//! A stream is a sequence of tasks; each task is stationary internally and
//! tasks arrive strictly one after the other. Training examples are
//! materialized. Test sets are kept as a shared base split plus the task's
//! transform and are produced on demand, so twenty rotated copies of a 10k
//! image test split never sit in memory at once.

mod permute;
mod rotate;
mod synthetic;

use alloc::sync::Arc;
use alloc::vec::Vec;

pub use permute::{invert_permutation, make_permutations, make_permutations_with, permute_image};
pub use rotate::{make_rotations, rotate_image, rotation_angle};
pub use synthetic::{make_synthetic, SYNTHETIC_DIM, SYNTHETIC_TEST_PER_TASK};

use crate::error::{invalid_spec, Result};

/// One labeled observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Features, pixel intensities in `[0, 1]` for the image benchmarks.
    pub x: Vec<f32>,
    pub y: usize,
    pub task_id: usize,
}

/// A labeled split with image geometry (`rows * cols == x.len()`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub rows: usize,
    pub cols: usize,
}

/// Train and test splits the image benchmarks are derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseData {
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    Rotations,
    Permutations,
    ManyPermutations,
    Synthetic,
}

impl StreamKind {
    pub fn name(&self) -> &'static str {
        match self {
            StreamKind::Rotations => "rotations",
            StreamKind::Permutations => "permutations",
            StreamKind::ManyPermutations => "many_permutations",
            StreamKind::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSpec {
    pub kind: StreamKind,
    pub task_count: usize,
    pub train_per_task: usize,
    pub seed: u64,
}

impl StreamSpec {
    /// 20 tasks of 1000 examples (MNIST Rotations / Permutations).
    pub fn standard(kind: StreamKind, seed: u64) -> Self {
        match kind {
            StreamKind::ManyPermutations => Self::many_permutations(seed),
            _ => Self { kind, task_count: 20, train_per_task: 1000, seed },
        }
    }

    /// 100 tasks of 200 examples.
    pub fn many_permutations(seed: u64) -> Self {
        Self { kind: StreamKind::ManyPermutations, task_count: 100, train_per_task: 200, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.task_count == 0 {
            return Err(invalid_spec!("task_count must be at least 1"));
        }
        if self.train_per_task == 0 {
            return Err(invalid_spec!("train_per_task must be at least 1"));
        }
        if self.kind == StreamKind::Rotations && self.task_count < 2 {
            return Err(invalid_spec!("rotations need at least 2 tasks, got {}", self.task_count));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

/// Where an example came from, for disjointness bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceRef {
    pub split: Split,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Identity,
    /// Counter-clockwise rotation about the image center, in degrees.
    Rotate { degrees: f64, rows: usize, cols: usize },
    /// `out[i] = in[perm[i]]`.
    Permute(Arc<[usize]>),
}

impl Transform {
    pub fn apply_into(&self, x: &[f32], out: &mut Vec<f32>) {
        out.clear();
        match self {
            Transform::Identity => out.extend_from_slice(x),
            Transform::Rotate { degrees, rows, cols } => {
                out.resize(x.len(), 0.0);
                rotate::rotate_into(x, *rows, *cols, *degrees, out);
            }
            Transform::Permute(perm) => out.extend(perm.iter().map(|&p| x[p])),
        }
    }

    pub fn apply(&self, x: &[f32]) -> Vec<f32> {
        let mut out = Vec::with_capacity(x.len());
        self.apply_into(x, &mut out);
        out
    }
}

/// A task's test split: base examples seen through the task transform.
#[derive(Debug, Clone)]
pub struct TestSet {
    base: Arc<[Example]>,
    transform: Transform,
    task_id: usize,
}

impl TestSet {
    pub fn new(base: Arc<[Example]>, transform: Transform, task_id: usize) -> Self {
        Self { base, transform, task_id }
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    /// Calls `f` on every transformed example, reusing one buffer.
    pub fn visit(&self, mut f: impl FnMut(&Example)) {
        let mut scratch = Example { x: Vec::new(), y: 0, task_id: self.task_id };
        for ex in self.base.iter() {
            self.transform.apply_into(&ex.x, &mut scratch.x);
            scratch.y = ex.y;
            f(&scratch);
        }
    }

    pub fn examples(&self) -> Vec<Example> {
        let mut out = Vec::with_capacity(self.len());
        self.visit(|ex| out.push(ex.clone()));
        out
    }

    pub fn sources(&self) -> impl Iterator<Item = SourceRef> + '_ {
        (0..self.base.len()).map(|index| SourceRef { split: Split::Test, index })
    }
}

#[derive(Debug, Clone)]
pub struct Task {
    pub task_id: usize,
    pub train: Vec<Example>,
    pub train_sources: Vec<SourceRef>,
    pub test: TestSet,
}

/// An ordered list of tasks.
#[derive(Debug, Clone)]
pub struct TaskStream {
    pub kind: StreamKind,
    pub tasks: Vec<Task>,
    pub per_task_train_count: usize,
}

impl TaskStream {
    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    /// Training examples in presentation order: task 0 fully, then task 1, ...
    pub fn train_examples(&self) -> impl Iterator<Item = &Example> + '_ {
        self.tasks.iter().flat_map(|t| t.train.iter())
    }

    pub fn total_train(&self) -> usize {
        self.tasks.iter().map(|t| t.train.len()).sum()
    }

    pub fn test_sets(&self) -> Vec<&TestSet> {
        self.tasks.iter().map(|t| &t.test).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.tasks.first().and_then(|t| t.train.first()).map_or(0, |e| e.x.len())
    }
}

/// Draws `count` distinct base indices (in random order) for one task.
pub(crate) fn sample_indices(rng: &mut crate::rng::Rng, available: usize, count: usize) -> Result<Vec<usize>> {
    if count > available {
        return Err(invalid_spec!("{count} examples per task requested, base split has {available}"));
    }
    Ok(rand::seq::index::sample(rng, available, count).into_vec())
}

/// Builds the stream described by `spec`; image kinds need `base`.
pub fn build_stream(spec: &StreamSpec, base: Option<&BaseData>) -> Result<TaskStream> {
    match spec.kind {
        StreamKind::Synthetic => make_synthetic(spec),
        kind => {
            let base = base.ok_or_else(|| invalid_spec!("{} stream needs base image data", kind.name()))?;
            match kind {
                StreamKind::Rotations => make_rotations(base, spec),
                _ => make_permutations(base, spec),
            }
        }
    }
}

pub(crate) fn build_task(
    base: &BaseData,
    test_base: &Arc<[Example]>,
    task_id: usize,
    indices: Vec<usize>,
    transform: Transform,
) -> Task {
    let mut train = Vec::with_capacity(indices.len());
    let mut train_sources = Vec::with_capacity(indices.len());
    for i in indices {
        let src = &base.train.examples[i];
        train.push(Example { x: transform.apply(&src.x), y: src.y, task_id });
        train_sources.push(SourceRef { split: Split::Train, index: i });
    }
    Task { task_id, train, train_sources, test: TestSet::new(Arc::clone(test_base), transform, task_id) }
}
