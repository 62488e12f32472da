use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{Example, SourceRef, Split, StreamKind, StreamSpec, Task, TaskStream, TestSet, Transform};
use crate::error::{invalid_spec, Result};
use crate::rng::{rng_from_seed, standard_normal, Rng};

pub const SYNTHETIC_DIM: usize = 10;
pub const SYNTHETIC_TEST_PER_TASK: usize = 500;

const CENTER: f64 = 0.5;
const MEAN_OFFSET: f64 = 0.3;
const NOISE: f64 = 0.1;

/// Gram-Schmidt on a Gaussian matrix; rows are orthonormal.
fn random_orthogonal(rng: &mut Rng, n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        for q in &rows {
            let proj: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = libm::sqrt(v.iter().map(|a| a * a).sum::<f64>());
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            rows.push(v);
        }
    }
    rows
}

fn draw(rng: &mut Rng, mean: &[f64], label: usize, task_id: usize) -> Example {
    let x = mean.iter().map(|&m| (m + NOISE * standard_normal(rng)).clamp(0.0, 1.0) as f32).collect();
    Example { x, y: label, task_id }
}

fn draw_labeled(rng: &mut Rng, means: &[Vec<f64>; 2], task_id: usize) -> Example {
    use rand::Rng as _;
    let label = usize::from(rng.random_bool(0.5));
    draw(rng, &means[label], label, task_id)
}

/// Two Gaussian classes in 10 dimensions per task.
///
/// Class means sit at `0.5 -/+ 0.3 * Q_t e_0`, where `Q_0` is the identity and
/// later tasks draw a random orthogonal `Q_t`. Noise is isotropic with standard
/// deviation 0.1, so each task alone is almost perfectly separable while the
/// decision boundaries of different tasks disagree.
pub fn make_synthetic(spec: &StreamSpec) -> Result<TaskStream> {
    spec.validate()?;
    if spec.kind != StreamKind::Synthetic {
        return Err(invalid_spec!("make_synthetic called with kind {}", spec.kind.name()));
    }
    let mut rng = rng_from_seed(spec.seed);
    let mut tasks = Vec::with_capacity(spec.task_count);
    for t in 0..spec.task_count {
        let direction: Vec<f64> = if t == 0 {
            let mut e = vec![0.0; SYNTHETIC_DIM];
            e[0] = 1.0;
            e
        } else {
            let q = random_orthogonal(&mut rng, SYNTHETIC_DIM);
            q.iter().map(|row| row[0]).collect()
        };
        let means: [Vec<f64>; 2] = [
            direction.iter().map(|d| CENTER - MEAN_OFFSET * d).collect(),
            direction.iter().map(|d| CENTER + MEAN_OFFSET * d).collect(),
        ];
        let train: Vec<Example> =
            (0..spec.train_per_task).map(|_| draw_labeled(&mut rng, &means, t)).collect();
        let test: Vec<Example> =
            (0..SYNTHETIC_TEST_PER_TASK).map(|_| draw_labeled(&mut rng, &means, t)).collect();
        let train_sources = (0..train.len()).map(|index| SourceRef { split: Split::Train, index }).collect();
        tasks.push(Task {
            task_id: t,
            train,
            train_sources,
            test: TestSet::new(Arc::from(test), Transform::Identity, t),
        });
    }
    Ok(TaskStream { kind: spec.kind, tasks, per_task_train_count: spec.train_per_task })
}
