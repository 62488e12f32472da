//! Allocation-free forward and backward passes.
//!
//! Inputs are swept sparsely: a zero input (blank pixel, dead ReLU) skips its
//! whole weight row in the forward pass, the weight update and the gradient
//! accumulation. The skipped contributions are exact zeros, so results match
//! a dense sweep bit for bit.

use alloc::vec;
use alloc::vec::Vec;

use super::spec::{LayerShape, NetworkSpec};

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let rest_a = chunks_a.remainder();
    let rest_b = chunks_b.remainder();
    for (x, y) in chunks_a.zip(chunks_b) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in rest_a.iter().zip(rest_b) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn layer_forward<T: Copy + Into<f64>>(
    params: &[f64],
    layer: LayerShape,
    input: &[T],
    out: &mut [f64],
    relu: bool,
) {
    let fo = layer.fan_out;
    out.copy_from_slice(&params[layer.bias_range()]);
    let weights = &params[layer.weight_range()];
    for (j, &a) in input.iter().enumerate() {
        let a: f64 = a.into();
        if a == 0.0 {
            continue;
        }
        let row = &weights[j * fo..(j + 1) * fo];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += a * w;
        }
    }
    if relu {
        for o in out.iter_mut() {
            if *o < 0.0 {
                *o = 0.0;
            }
        }
    }
}

pub(crate) fn layer_update<T: Copy + Into<f64>>(
    params: &mut [f64],
    layer: LayerShape,
    input: &[T],
    delta: &[f64],
    alpha: f64,
) {
    let fo = layer.fan_out;
    let base = layer.offset;
    for (j, &a) in input.iter().enumerate() {
        let a: f64 = a.into();
        if a == 0.0 {
            continue;
        }
        let row = &mut params[base + j * fo..base + (j + 1) * fo];
        for (p, &d) in row.iter_mut().zip(delta) {
            *p -= alpha * (d * a);
        }
    }
    for (p, &d) in params[layer.bias_range()].iter_mut().zip(delta) {
        *p -= alpha * d;
    }
}

fn layer_accumulate<T: Copy + Into<f64>>(
    grad: &mut [f64],
    layer: LayerShape,
    input: &[T],
    delta: &[f64],
    scale: f64,
) {
    let fo = layer.fan_out;
    let base = layer.offset;
    for (j, &a) in input.iter().enumerate() {
        let a: f64 = a.into();
        if a == 0.0 {
            continue;
        }
        let row = &mut grad[base + j * fo..base + (j + 1) * fo];
        for (g, &d) in row.iter_mut().zip(delta) {
            *g += scale * (d * a);
        }
    }
    for (g, &d) in grad[layer.bias_range()].iter_mut().zip(delta) {
        *g += scale * d;
    }
}

/// Scratch buffers for one network shape.
///
/// Call [`Workspace::forward`], then set the output gradient (for example with
/// [`Workspace::cross_entropy`]), then [`Workspace::backward`]. After that the
/// per-layer activations and deltas describe the example's gradient and can be
/// applied as an SGD step or accumulated into a dense gradient.
#[derive(Debug, Clone)]
pub struct Workspace {
    outs: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    head: usize,
}

impl Workspace {
    pub fn new(spec: &NetworkSpec) -> Self {
        let outs: Vec<Vec<f64>> =
            (0..spec.depth()).map(|l| vec![0.0; spec.layer(0, l).fan_out]).collect();
        let deltas = outs.clone();
        Self { outs, deltas, head: 0 }
    }

    /// Runs the network and returns the logits.
    pub fn forward(&mut self, spec: &NetworkSpec, params: &[f64], x: &[f32], head: usize) -> &[f64] {
        debug_assert_eq!(x.len(), spec.input_dim());
        debug_assert_eq!(params.len(), spec.param_count());
        self.head = head;
        let depth = spec.depth();
        let last = depth - 1;
        layer_forward(params, spec.layer(head, 0), x, &mut self.outs[0], last != 0);
        for l in 1..depth {
            let (prev, rest) = self.outs.split_at_mut(l);
            layer_forward(params, spec.layer(head, l), &prev[l - 1], &mut rest[0], l != last);
        }
        &self.outs[last]
    }

    pub fn logits(&self) -> &[f64] {
        self.outs.last().expect("network has at least one layer")
    }

    /// Output of hidden layer `l` (post-activation) or the logits for the last layer.
    pub fn activation(&self, l: usize) -> &[f64] {
        &self.outs[l]
    }

    /// Loss gradient with respect to the pre-activation of layer `l`.
    pub fn delta(&self, l: usize) -> &[f64] {
        &self.deltas[l]
    }

    pub fn head(&self) -> usize {
        self.head
    }

    pub fn depth(&self) -> usize {
        self.outs.len()
    }

    /// Mutable view of the gradient with respect to the logits.
    pub fn output_grad_mut(&mut self) -> &mut [f64] {
        self.deltas.last_mut().expect("network has at least one layer")
    }

    /// Softmax cross-entropy at `label`; writes `softmax - onehot` as the
    /// output gradient and returns the loss.
    pub fn cross_entropy(&mut self, label: usize) -> f64 {
        let last = self.outs.len() - 1;
        let logits = &self.outs[last];
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let out = &mut self.deltas[last];
        let mut sum = 0.0;
        for (o, &z) in out.iter_mut().zip(logits) {
            *o = libm::exp(z - max);
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
        out[label] -= 1.0;
        libm::log(sum) + max - logits[label]
    }

    /// Backpropagates the output gradient to every layer.
    pub fn backward(&mut self, spec: &NetworkSpec, params: &[f64]) {
        let head = self.head;
        for l in (1..self.outs.len()).rev() {
            let layer = spec.layer(head, l);
            let fo = layer.fan_out;
            let weights = &params[layer.weight_range()];
            let (lower, upper) = self.deltas.split_at_mut(l);
            let delta = &upper[0];
            let below = &mut lower[l - 1];
            for (j, (d, &a)) in below.iter_mut().zip(&self.outs[l - 1]).enumerate() {
                *d = if a > 0.0 { dot(&weights[j * fo..(j + 1) * fo], delta) } else { 0.0 };
            }
        }
    }

    /// `params -= alpha * grad` for the example held in the workspace.
    pub fn apply_sgd(&self, spec: &NetworkSpec, x: &[f32], alpha: f64, params: &mut [f64]) {
        let head = self.head;
        layer_update(params, spec.layer(head, 0), x, &self.deltas[0], alpha);
        for l in 1..self.outs.len() {
            layer_update(params, spec.layer(head, l), &self.outs[l - 1], &self.deltas[l], alpha);
        }
    }

    /// `grad += scale * grad(example)` for the example held in the workspace.
    pub fn accumulate_grad(&self, spec: &NetworkSpec, x: &[f32], scale: f64, grad: &mut [f64]) {
        let head = self.head;
        layer_accumulate(grad, spec.layer(head, 0), x, &self.deltas[0], scale);
        for l in 1..self.outs.len() {
            layer_accumulate(grad, spec.layer(head, l), &self.outs[l - 1], &self.deltas[l], scale);
        }
    }
}

/// Softmax cross-entropy loss for the given logits (no gradient).
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| libm::exp(z - max)).sum();
    libm::log(sum) + max - logits[label]
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate().skip(1) {
        if z > logits[best] {
            best = i;
        }
    }
    best
}
