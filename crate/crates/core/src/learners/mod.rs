//! Continual learners.
//!
//! Every algorithm sits behind [`Learner::step`]: it consumes the stream one
//! example at a time, updates its parameters and memory, and exposes the model
//! used to classify each task.

mod ewc;
mod gem;
mod replay_steps;
mod reptile;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

pub use ewc::EwcState;
pub use gem::{gem_project, solve_gem_dual, DualSolution, GemProjection, GemRoute, GemState, GemStats};
pub use replay_steps::Plan;
pub use reptile::reptile_offline;

use crate::error::{invalid_input, invalid_spec, Error, Result};
use crate::nn::{check_example, init_params_with, InitScheme, NetworkSpec, ParamVector, Workspace};
use crate::replay::{ReservoirBuffer, TaskRingBuffer};
use crate::rng::{derive_seed, Rng, SeedSource, SeedStreams};
use crate::streams::Example;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Online,
    Independent,
    TaskInput,
    Ewc,
    Gem,
    ErReservoir,
    ErTasks,
    MerA1,
    MerObb,
    MerCel,
    ReptileOffline,
}

impl Algorithm {
    pub const ALL: [Algorithm; 11] = [
        Algorithm::Online,
        Algorithm::Independent,
        Algorithm::TaskInput,
        Algorithm::Ewc,
        Algorithm::Gem,
        Algorithm::ErReservoir,
        Algorithm::ErTasks,
        Algorithm::MerA1,
        Algorithm::MerObb,
        Algorithm::MerCel,
        Algorithm::ReptileOffline,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Online => "online",
            Algorithm::Independent => "independent",
            Algorithm::TaskInput => "task_input",
            Algorithm::Ewc => "ewc",
            Algorithm::Gem => "gem",
            Algorithm::ErReservoir => "er_reservoir",
            Algorithm::ErTasks => "er_tasks",
            Algorithm::MerA1 => "mer_a1",
            Algorithm::MerObb => "mer_obb",
            Algorithm::MerCel => "mer_cel",
            Algorithm::ReptileOffline => "reptile_offline",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    /// Whether the learner keeps a reservoir of past examples.
    pub fn uses_reservoir(&self) -> bool {
        matches!(
            self,
            Algorithm::ErReservoir | Algorithm::ErTasks | Algorithm::MerA1 | Algorithm::MerObb | Algorithm::MerCel
        )
    }
}

/// Hyperparameters for every algorithm.
///
/// `k` is the full batch size including the current example, so a grid entry
/// "k-1 = 100" is `k = 101` here. Fields an algorithm does not use are
/// validated but otherwise ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    /// Inner SGD learning rate.
    pub alpha: f64,
    /// Within-batch meta rate.
    pub beta: f64,
    /// Across-batch meta rate.
    pub gamma: f64,
    /// Batches per example (MER), or the current-example rate multiplier (`mer_cel`).
    pub s: usize,
    pub k: usize,
    pub buffer_capacity: usize,
    pub ewc_lambda: f64,
    pub gem_memory_strength: f64,
    /// Master seed; init, buffer and sampling seeds are derived from it.
    pub seed: u64,
    /// Cap on examples used for each EWC Fisher estimate.
    pub ewc_fisher_samples: usize,
    /// Ridge added to the GEM dual Hessian.
    pub gem_eps: f64,
    pub gem_max_iters: usize,
    /// Independent: start task `t` from task `t - 1`'s final parameters.
    pub independent_clone: bool,
    pub init: InitScheme,
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            alpha: 0.01,
            beta: 1.0,
            gamma: 1.0,
            s: 1,
            k: 1,
            buffer_capacity: 0,
            ewc_lambda: 0.0,
            gem_memory_strength: 0.0,
            seed: 0,
            ewc_fisher_samples: 1000,
            gem_eps: 1e-3,
            gem_max_iters: 500,
            independent_clone: false,
            init: InitScheme::FanIn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("ewc_lambda", self.ewc_lambda),
            ("gem_memory_strength", self.gem_memory_strength),
            ("gem_eps", self.gem_eps),
        ];
        for (name, v) in rates {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid_spec!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.s == 0 || self.k == 0 {
            return Err(invalid_spec!("s and k must be at least 1 (s={}, k={})", self.s, self.k));
        }
        if self.algorithm == Algorithm::Ewc && self.ewc_fisher_samples == 0 {
            return Err(invalid_spec!("ewc_fisher_samples must be at least 1"));
        }
        Ok(())
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Loss of the current example before the update.
    pub loss: f64,
}

/// Parameters, memory and scratch space of one training run.
#[derive(Debug, Clone)]
pub struct Learner {
    config: LearnerConfig,
    task_count: usize,
    spec: Arc<NetworkSpec>,
    /// Shared model; for `independent` the model of task 0.
    params: ParamVector,
    /// Models of tasks 1.. for `independent`.
    task_models: Vec<ParamVector>,
    reservoir: ReservoirBuffer<Example>,
    ws: Workspace,
    across_anchor: ParamVector,
    within_anchor: ParamVector,
    grad: Vec<f64>,
    buffer_rng: Rng,
    sample_rng: Rng,
    current_task: Option<usize>,
    steps: u64,
    ewc: Option<EwcState>,
    gem: Option<GemState>,
}

fn scaled_hidden(hidden: &[usize], task_count: usize) -> Vec<usize> {
    hidden.iter().map(|&h| (h / task_count.max(1)).max(1)).collect()
}

impl Learner {
    /// `base` is the shared architecture; `task_count` sizes the per-task
    /// structures (Independent models, Task Input layers, GEM segments).
    pub fn new(config: LearnerConfig, base: &NetworkSpec, task_count: usize) -> Result<Self> {
        config.validate()?;
        if task_count == 0 {
            return Err(invalid_spec!("task_count must be at least 1"));
        }
        if config.algorithm == Algorithm::ReptileOffline {
            return Err(invalid_spec!("reptile_offline trains on a stationary dataset; use reptile_offline()"));
        }
        let spec = Arc::new(match config.algorithm {
            Algorithm::TaskInput => {
                NetworkSpec::with_heads(base.input_dim(), base.hidden_dims(), base.output_dim(), task_count)?
            }
            Algorithm::Independent => NetworkSpec::new(
                base.input_dim(),
                &scaled_hidden(base.hidden_dims(), task_count),
                base.output_dim(),
            )?,
            _ => base.clone(),
        });
        let seeds = SeedStreams::new(config.seed);
        let init_seed = seeds.seed(SeedSource::Init);
        let params = init_params_with(&spec, init_seed, config.init);
        let task_models = if config.algorithm == Algorithm::Independent {
            (1..task_count).map(|t| init_params_with(&spec, derive_seed(init_seed, t as u64), config.init)).collect()
        } else {
            Vec::new()
        };
        let capacity = if config.algorithm.uses_reservoir() { config.buffer_capacity } else { 0 };
        let ewc = (config.algorithm == Algorithm::Ewc).then(|| EwcState::new(&spec));
        let gem = (config.algorithm == Algorithm::Gem)
            .then(|| GemState::new(TaskRingBuffer::new(config.buffer_capacity, task_count)));
        Ok(Self {
            task_count,
            ws: Workspace::new(&spec),
            across_anchor: params.clone(),
            within_anchor: params.clone(),
            grad: alloc::vec![0.0; spec.param_count()],
            reservoir: ReservoirBuffer::new(capacity),
            buffer_rng: seeds.rng(SeedSource::Buffer),
            sample_rng: seeds.rng(SeedSource::Sampling),
            current_task: None,
            steps: 0,
            params,
            task_models,
            spec,
            ewc,
            gem,
            config,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn algorithm(&self) -> Algorithm {
        self.config.algorithm
    }

    pub fn spec(&self) -> &Arc<NetworkSpec> {
        &self.spec
    }

    pub fn task_count(&self) -> usize {
        self.task_count
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// The live shared parameters (task 0's model for `independent`).
    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    /// Parameters that classify examples of `task_id`.
    pub fn params_for_task(&self, task_id: usize) -> &ParamVector {
        if self.config.algorithm == Algorithm::Independent && task_id > 0 {
            &self.task_models[(task_id - 1).min(self.task_models.len() - 1)]
        } else {
            &self.params
        }
    }

    pub fn reservoir(&self) -> &ReservoirBuffer<Example> {
        &self.reservoir
    }

    /// Replaces the replay memory, e.g. when resuming from a snapshot.
    pub fn set_reservoir(&mut self, buffer: ReservoirBuffer<Example>) {
        self.reservoir = buffer;
    }

    pub fn ewc(&self) -> Option<&EwcState> {
        self.ewc.as_ref()
    }

    pub fn gem(&self) -> Option<&GemState> {
        self.gem.as_ref()
    }

    pub fn sample_rng_mut(&mut self) -> &mut Rng {
        &mut self.sample_rng
    }

    fn model_mut(&mut self, task_id: usize) -> &mut ParamVector {
        if self.config.algorithm == Algorithm::Independent && task_id > 0 {
            &mut self.task_models[task_id - 1]
        } else {
            &mut self.params
        }
    }

    fn check(&self, example: &Example) -> Result<()> {
        if matches!(self.config.algorithm, Algorithm::Independent) && example.task_id >= self.task_count {
            return Err(invalid_input!("task {} outside {} tasks", example.task_id, self.task_count));
        }
        check_example(&self.spec, example).map(|_| ())
    }

    /// Consumes one example.
    pub fn step(&mut self, example: &Example) -> Result<StepReport> {
        self.check(example)?;
        let previous = self.current_task.replace(example.task_id);
        let loss = match self.config.algorithm {
            Algorithm::Online | Algorithm::TaskInput => self.step_online(example)?,
            Algorithm::Independent => self.step_independent(example, previous)?,
            Algorithm::Ewc => self.step_ewc(example, previous)?,
            Algorithm::Gem => self.step_gem(example)?,
            Algorithm::ErReservoir => self.step_er_reservoir(example)?,
            Algorithm::ErTasks => self.step_er_tasks(example)?,
            Algorithm::MerA1 => self.step_mer_a1(example)?,
            Algorithm::MerObb => self.step_mer_obb(example)?,
            Algorithm::MerCel => self.step_mer_cel(example)?,
            Algorithm::ReptileOffline => unreachable!("rejected in Learner::new"),
        };
        self.steps += 1;
        self.finish_step(loss)
    }

    fn finish_step(&self, loss: f64) -> Result<StepReport> {
        if !loss.is_finite() {
            return Err(Error::Numerical(alloc::format!("non-finite loss {loss} at step {}", self.steps)));
        }
        let finite = self.params.is_finite() && self.task_models.iter().all(ParamVector::is_finite);
        if !finite {
            return Err(Error::Numerical(alloc::format!("non-finite parameters after step {}", self.steps)));
        }
        Ok(StepReport { loss })
    }

    fn step_online(&mut self, example: &Example) -> Result<f64> {
        let alpha = self.config.alpha;
        Ok(sgd_example(&mut self.ws, &self.spec, self.params.values_mut(), example, alpha))
    }

    fn step_independent(&mut self, example: &Example, previous: Option<usize>) -> Result<f64> {
        let t = example.task_id;
        if self.config.independent_clone && t > 0 && previous != Some(t) {
            let prior = self.params_for_task(t - 1).clone();
            self.model_mut(t).copy_from(&prior)?;
        }
        let alpha = self.config.alpha;
        let target = if t == 0 { &mut self.params } else { &mut self.task_models[t - 1] };
        Ok(sgd_example(&mut self.ws, &self.spec, target.values_mut(), example, alpha))
    }

    /// Loss gradient of `example` at the current model, without updating it.
    pub fn gradient(&self, example: &Example) -> Result<ParamVector> {
        crate::nn::loss_and_grad(self.params_for_task(example.task_id), example).map(|r| r.grad)
    }
}

/// One fused SGD step on `example`; returns its pre-step loss.
///
/// The example must already have been validated against `spec`.
pub(crate) fn sgd_example(ws: &mut Workspace, spec: &NetworkSpec, params: &mut [f64], example: &Example, alpha: f64) -> f64 {
    let head = spec.head_for_task(example.task_id).unwrap_or(0);
    ws.forward(spec, params, &example.x, head);
    let loss = ws.cross_entropy(example.y);
    ws.backward(spec, params);
    ws.apply_sgd(spec, &example.x, alpha, params);
    loss
}

/// Summary string for logs, e.g. `mer_a1(alpha=0.03, beta=0.03, ...)`.
pub fn describe(config: &LearnerConfig) -> String {
    alloc::format!(
        "{}(alpha={}, beta={}, gamma={}, s={}, k={}, buffer={}, lambda={}, strength={}, init={}, seed={})",
        config.algorithm.name(),
        config.alpha,
        config.beta,
        config.gamma,
        config.s,
        config.k,
        config.buffer_capacity,
        config.ewc_lambda,
        config.gem_memory_strength,
        config.init.name(),
        config.seed
    )
}
