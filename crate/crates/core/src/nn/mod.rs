//! Minimal dense-network engine.
//!
//! Every learner in the crate works on a [`ParamVector`]: one flat `f64` vector
//! holding all weights and biases of a [`NetworkSpec`]. The same type carries
//! gradients, Fisher diagonals and the endpoints of Reptile interpolations.

mod kernel;
mod spec;

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

pub use kernel::{argmax, cross_entropy_loss, Workspace};
pub(crate) use kernel::{dot, layer_update};
pub use spec::{Activation, LayerShape, NetworkSpec};

use crate::error::{invalid_input, Result};
use crate::rng::rng_from_seed;
use crate::streams::Example;

/// Flat parameter (or gradient) vector tied to a network shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    spec: Arc<NetworkSpec>,
}

impl ParamVector {
    pub fn zeros(spec: &Arc<NetworkSpec>) -> Self {
        Self { values: vec![0.0; spec.param_count()], spec: Arc::clone(spec) }
    }

    pub fn from_values(spec: &Arc<NetworkSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(invalid_input!(
                "{} values for a network with {} parameters",
                values.len(),
                spec.param_count()
            ));
        }
        Ok(Self { values, spec: Arc::clone(spec) })
    }

    pub fn spec(&self) -> &Arc<NetworkSpec> {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.spec, &other.spec) || *self.spec == *other.spec
    }

    fn check_shape(&self, other: &ParamVector) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(invalid_input!("parameter vectors belong to different networks"))
        }
    }

    /// Overwrites `self` with `other` without reallocating.
    pub fn copy_from(&mut self, other: &ParamVector) -> Result<()> {
        self.check_shape(other)?;
        self.values.copy_from_slice(&other.values);
        Ok(())
    }

    /// In-place `self <- (1 - rate) * anchor + rate * self`.
    ///
    /// The two-weight form is exact at both endpoints: `rate = 1` keeps `self`
    /// and `rate = 0` restores `anchor`.
    pub fn interpolate_from(&mut self, anchor: &ParamVector, rate: f64) -> Result<()> {
        self.check_shape(anchor)?;
        let keep = 1.0 - rate;
        for (v, &a) in self.values.iter_mut().zip(&anchor.values) {
            *v = keep * a + rate * *v;
        }
        Ok(())
    }
}

/// Result of [`loss_and_grad`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub loss: f64,
    pub grad: ParamVector,
}

/// Weight initialization scale. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    #[default]
    FanIn,
    /// `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
    Glorot,
}

impl InitScheme {
    pub fn name(&self) -> &'static str {
        match self {
            InitScheme::FanIn => "fan_in",
            InitScheme::Glorot => "glorot",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [InitScheme::FanIn, InitScheme::Glorot].into_iter().find(|s| s.name() == name)
    }

    pub fn bound(&self, layer: &LayerShape) -> f64 {
        match self {
            InitScheme::FanIn => 1.0 / libm::sqrt(layer.fan_in as f64),
            InitScheme::Glorot => libm::sqrt(6.0 / (layer.fan_in + layer.fan_out) as f64),
        }
    }
}

/// Weights drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
pub fn init_params(spec: &Arc<NetworkSpec>, seed: u64) -> ParamVector {
    init_params_with(spec, seed, InitScheme::FanIn)
}

/// Like [`init_params`] with a chosen weight scale.
pub fn init_params_with(spec: &Arc<NetworkSpec>, seed: u64, scheme: InitScheme) -> ParamVector {
    let mut rng = rng_from_seed(seed);
    let mut params = ParamVector::zeros(spec);
    for layer in spec.all_layers() {
        let bound = scheme.bound(&layer);
        for w in &mut params.values[layer.weight_range()] {
            *w = rng.random_range(-bound..bound);
        }
    }
    params
}

pub(crate) fn check_input(spec: &NetworkSpec, x: &[f32], head: usize) -> Result<()> {
    if x.len() != spec.input_dim() {
        return Err(invalid_input!("input has {} features, network expects {}", x.len(), spec.input_dim()));
    }
    if head >= spec.head_count() {
        return Err(invalid_input!("head {head} out of range (head_count {})", spec.head_count()));
    }
    Ok(())
}

pub(crate) fn check_example(spec: &NetworkSpec, example: &Example) -> Result<usize> {
    let head = spec.head_for_task(example.task_id)?;
    check_input(spec, &example.x, head)?;
    if example.y >= spec.output_dim() {
        return Err(invalid_input!("label {} out of range for {} classes", example.y, spec.output_dim()));
    }
    Ok(head)
}

pub fn forward(params: &ParamVector, x: &[f32], head: usize) -> Result<Vec<f64>> {
    let spec = params.spec();
    check_input(spec, x, head)?;
    let mut ws = Workspace::new(spec);
    Ok(ws.forward(spec, params.values(), x, head).to_vec())
}

/// Softmax cross-entropy loss and its exact gradient.
pub fn loss_and_grad(params: &ParamVector, example: &Example) -> Result<GradResult> {
    let spec = params.spec();
    let head = check_example(spec, example)?;
    let mut ws = Workspace::new(spec);
    ws.forward(spec, params.values(), &example.x, head);
    let loss = ws.cross_entropy(example.y);
    ws.backward(spec, params.values());
    let mut grad = ParamVector::zeros(spec);
    ws.accumulate_grad(spec, &example.x, 1.0, &mut grad.values);
    Ok(GradResult { loss, grad })
}

/// Loss of one example (no gradient).
pub fn loss(params: &ParamVector, example: &Example) -> Result<f64> {
    let spec = params.spec();
    let head = check_example(spec, example)?;
    let mut ws = Workspace::new(spec);
    let logits = ws.forward(spec, params.values(), &example.x, head);
    Ok(cross_entropy_loss(logits, example.y))
}

/// `params - alpha * grad`.
pub fn sgd_step(params: &ParamVector, grad: &ParamVector, alpha: f64) -> Result<ParamVector> {
    params.check_shape(grad)?;
    if !(alpha >= 0.0) {
        return Err(invalid_input!("learning rate must be non-negative, got {alpha}"));
    }
    let values = params.values.iter().zip(&grad.values).map(|(&p, &g)| p - alpha * g).collect();
    Ok(ParamVector { values, spec: Arc::clone(&params.spec) })
}

/// Inner product of two gradients: positive means transfer, negative interference.
pub fn grad_dot(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    a.check_shape(b)?;
    Ok(dot(&a.values, &b.values))
}

/// `theta0 + rate * (theta1 - theta0)`, evaluated as `(1 - rate) * theta0 + rate * theta1`.
pub fn interpolate(theta0: &ParamVector, theta1: &ParamVector, rate: f64) -> Result<ParamVector> {
    let mut out = theta1.clone();
    out.interpolate_from(theta0, rate)?;
    Ok(out)
}

/// Empirical Fisher diagonal: mean squared cross-entropy gradient at the observed labels.
pub fn fisher_diagonal(params: &ParamVector, examples: &[Example]) -> Result<ParamVector> {
    if examples.is_empty() {
        return Err(invalid_input!("Fisher diagonal needs at least one example"));
    }
    let spec = params.spec();
    let mut ws = Workspace::new(spec);
    let mut grad = vec![0.0; spec.param_count()];
    let mut fisher = ParamVector::zeros(spec);
    let scale = 1.0 / examples.len() as f64;
    for example in examples {
        let head = check_example(spec, example)?;
        ws.forward(spec, params.values(), &example.x, head);
        ws.cross_entropy(example.y);
        ws.backward(spec, params.values());
        grad.iter_mut().for_each(|g| *g = 0.0);
        ws.accumulate_grad(spec, &example.x, 1.0, &mut grad);
        for (f, &g) in fisher.values.iter_mut().zip(&grad) {
            *f += scale * (g * g);
        }
    }
    Ok(fisher)
}
