use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{build_task, sample_indices, BaseData, Example, StreamKind, StreamSpec, TaskStream, Transform};
use crate::error::{invalid_spec, Result};
use crate::rng::rng_from_seed;

/// `out[i] = x[perm[i]]`.
pub fn permute_image(x: &[f32], perm: &[usize]) -> Vec<f32> {
    perm.iter().map(|&p| x[p]).collect()
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = alloc::vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

fn check_permutation(perm: &[usize], len: usize) -> Result<()> {
    if perm.len() != len {
        return Err(invalid_spec!("permutation has {} entries, images have {len} pixels", perm.len()));
    }
    let mut seen = alloc::vec![false; len];
    for &p in perm {
        if p >= len || core::mem::replace(&mut seen[p], true) {
            return Err(invalid_spec!("not a permutation of 0..{len}"));
        }
    }
    Ok(())
}

/// One uniform random pixel permutation per task, task 0 included.
pub fn make_permutations(base: &BaseData, spec: &StreamSpec) -> Result<TaskStream> {
    spec.validate()?;
    let pixels = base.train.rows * base.train.cols;
    // Permutations come from their own generator so the example draws match
    // make_permutations_with given the same spec.
    let mut rng = rng_from_seed(crate::rng::derive_seed(spec.seed, 0x7065726d));
    let perms = (0..spec.task_count)
        .map(|_| {
            let mut p: Vec<usize> = (0..pixels).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    make_permutations_with(base, spec, perms)
}

/// Builds a permutation stream from explicit per-task permutations.
pub fn make_permutations_with(base: &BaseData, spec: &StreamSpec, perms: Vec<Vec<usize>>) -> Result<TaskStream> {
    spec.validate()?;
    if !matches!(spec.kind, StreamKind::Permutations | StreamKind::ManyPermutations) {
        return Err(invalid_spec!("make_permutations called with kind {}", spec.kind.name()));
    }
    if perms.len() != spec.task_count {
        return Err(invalid_spec!("{} permutations for {} tasks", perms.len(), spec.task_count));
    }
    let pixels = base.train.rows * base.train.cols;
    if base.test.rows * base.test.cols != pixels {
        return Err(invalid_spec!("train and test images differ in shape"));
    }
    let mut rng = rng_from_seed(spec.seed);
    let test_base: Arc<[Example]> = base.test.examples.clone().into();
    let mut tasks = Vec::with_capacity(spec.task_count);
    for (t, perm) in perms.into_iter().enumerate() {
        check_permutation(&perm, pixels)?;
        let indices = sample_indices(&mut rng, base.train.examples.len(), spec.train_per_task)?;
        tasks.push(build_task(base, &test_base, t, indices, Transform::Permute(perm.into())));
    }
    Ok(TaskStream { kind: spec.kind, tasks, per_task_train_count: spec.train_per_task })
}
