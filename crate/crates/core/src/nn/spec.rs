use alloc::vec::Vec;

use crate::error::{invalid_spec, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

/// Location of one dense layer inside a flat parameter vector.
///
/// Weights are stored input-major: the `fan_out` weights leaving input `j`
/// occupy `offset + j * fan_out .. offset + (j + 1) * fan_out`. The `fan_out`
/// biases follow the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn weight_range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    pub fn bias_range(&self) -> core::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }

    pub fn end(&self) -> usize {
        self.offset + (self.fan_in + 1) * self.fan_out
    }
}

/// Architecture of a ReLU multilayer perceptron.
///
/// With `head_count > 1` the input layer is replicated once per head (one
/// dedicated input layer per task); every later layer is shared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    output_dim: usize,
    activation: Activation,
    head_count: usize,
    input_layers: Vec<LayerShape>,
    shared_layers: Vec<LayerShape>,
    param_count: usize,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize) -> Result<Self> {
        Self::with_heads(input_dim, hidden_dims, output_dim, 1)
    }

    pub fn with_heads(
        input_dim: usize,
        hidden_dims: &[usize],
        output_dim: usize,
        head_count: usize,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(invalid_spec!("input and output dimensions must be positive"));
        }
        if hidden_dims.iter().any(|&h| h == 0) {
            return Err(invalid_spec!("hidden layer widths must be positive"));
        }
        if head_count == 0 {
            return Err(invalid_spec!("head_count must be positive"));
        }
        let mut dims = Vec::with_capacity(hidden_dims.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden_dims);
        dims.push(output_dim);

        let mut offset = 0;
        let mut input_layers = Vec::with_capacity(head_count);
        for _ in 0..head_count {
            let layer = LayerShape { fan_in: dims[0], fan_out: dims[1], offset };
            offset = layer.end();
            input_layers.push(layer);
        }
        let mut shared_layers = Vec::with_capacity(dims.len() - 2);
        for w in dims[1..].windows(2) {
            let layer = LayerShape { fan_in: w[0], fan_out: w[1], offset };
            offset = layer.end();
            shared_layers.push(layer);
        }
        Ok(Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            activation: Activation::Relu,
            head_count,
            input_layers,
            shared_layers,
            param_count: offset,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn head_count(&self) -> usize {
        self.head_count
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Number of dense layers on the forward path.
    pub fn depth(&self) -> usize {
        self.shared_layers.len() + 1
    }

    /// The `index`-th layer on the forward path of `head`.
    pub fn layer(&self, head: usize, index: usize) -> LayerShape {
        if index == 0 {
            self.input_layers[head]
        } else {
            self.shared_layers[index - 1]
        }
    }

    pub fn input_layer(&self, head: usize) -> LayerShape {
        self.input_layers[head]
    }

    /// Every layer in storage order, input layers of all heads first.
    pub fn all_layers(&self) -> impl Iterator<Item = LayerShape> + '_ {
        self.input_layers.iter().chain(self.shared_layers.iter()).copied()
    }

    /// Head used for an example of `task_id`: always 0 for single-headed nets.
    pub fn head_for_task(&self, task_id: usize) -> Result<usize> {
        if self.head_count == 1 {
            Ok(0)
        } else if task_id < self.head_count {
            Ok(task_id)
        } else {
            Err(crate::error::invalid_input!(
                "task {task_id} has no input layer (head_count {})",
                self.head_count
            ))
        }
    }
}
