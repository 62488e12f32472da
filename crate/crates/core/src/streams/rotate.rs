use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{build_task, sample_indices, BaseData, Example, StreamKind, StreamSpec, TaskStream, Transform};
use crate::error::{invalid_spec, Result};
use crate::rng::rng_from_seed;

/// Angle of task `task` in a stream of `task_count` tasks, spread evenly over `[0, 180]`.
pub fn rotation_angle(task: usize, task_count: usize) -> f64 {
    if task_count < 2 {
        return 0.0;
    }
    180.0 * task as f64 / (task_count - 1) as f64
}

/// Rotates a row-major image counter-clockwise about its center.
///
/// Each output pixel is inverse-mapped into the source and read with bilinear
/// interpolation; taps outside the image read as 0.
pub fn rotate_image(x: &[f32], rows: usize, cols: usize, degrees: f64) -> Vec<f32> {
    let mut out = alloc::vec![0.0; x.len()];
    rotate_into(x, rows, cols, degrees, &mut out);
    out
}

pub(crate) fn rotate_into(x: &[f32], rows: usize, cols: usize, degrees: f64, out: &mut [f32]) {
    debug_assert_eq!(x.len(), rows * cols);
    let theta = degrees.to_radians();
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    let cr = (rows as f64 - 1.0) / 2.0;
    let cc = (cols as f64 - 1.0) / 2.0;
    let pixel = |r: i64, c: i64| -> f64 {
        if r < 0 || c < 0 || r >= rows as i64 || c >= cols as i64 {
            0.0
        } else {
            x[r as usize * cols + c as usize] as f64
        }
    };
    for r in 0..rows {
        // y axis points up so positive angles turn counter-clockwise on screen.
        let dy = cr - r as f64;
        for c in 0..cols {
            let dx = c as f64 - cc;
            let sx = cos * dx + sin * dy;
            let sy = -sin * dx + cos * dy;
            let src_c = sx + cc;
            let src_r = cr - sy;
            let r0 = libm::floor(src_r);
            let c0 = libm::floor(src_c);
            let fr = src_r - r0;
            let fc = src_c - c0;
            let (r0, c0) = (r0 as i64, c0 as i64);
            let v = (1.0 - fr) * ((1.0 - fc) * pixel(r0, c0) + fc * pixel(r0, c0 + 1))
                + fr * ((1.0 - fc) * pixel(r0 + 1, c0) + fc * pixel(r0 + 1, c0 + 1));
            out[r * cols + c] = v as f32;
        }
    }
}

pub fn make_rotations(base: &BaseData, spec: &StreamSpec) -> Result<TaskStream> {
    spec.validate()?;
    if spec.kind != StreamKind::Rotations {
        return Err(invalid_spec!("make_rotations called with kind {}", spec.kind.name()));
    }
    let (rows, cols) = (base.train.rows, base.train.cols);
    if (base.test.rows, base.test.cols) != (rows, cols) {
        return Err(invalid_spec!("train and test images differ in shape"));
    }
    let mut rng = rng_from_seed(spec.seed);
    let test_base: Arc<[Example]> = base.test.examples.clone().into();
    let mut tasks = Vec::with_capacity(spec.task_count);
    for t in 0..spec.task_count {
        let indices = sample_indices(&mut rng, base.train.examples.len(), spec.train_per_task)?;
        let transform = Transform::Rotate { degrees: rotation_angle(t, spec.task_count), rows, cols };
        tasks.push(build_task(base, &test_base, t, indices, transform));
    }
    Ok(TaskStream { kind: spec.kind, tasks, per_task_train_count: spec.train_per_task })
}
