//! Experience replay and the MER variants.

use alloc::vec::Vec;

use super::{sgd_example, Algorithm, Learner, StepReport};
use crate::error::{invalid_input, Result};
use crate::nn::Workspace;
use crate::replay::{plan_big_batch, plan_mer_batches, plan_random_position_batch, Slot};
use crate::streams::Example;

/// Which buffer entries a replay step trains on, and in what order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Plan {
    /// `s` batches (MER Algorithm 1).
    Batches(Vec<Vec<Slot>>),
    /// One batch (ER, one-big-batch MER).
    Batch(Vec<Slot>),
    /// One batch plus the index that receives the boosted rate (`mer_cel`).
    Positioned(Vec<Slot>, usize),
}

impl Plan {
    fn slots(&self) -> impl Iterator<Item = &Slot> + '_ {
        let (batches, single): (&[Vec<Slot>], &[Slot]) = match self {
            Plan::Batches(b) => (b, &[]),
            Plan::Batch(b) | Plan::Positioned(b, _) => (&[], b),
        };
        batches.iter().flatten().chain(single)
    }

    /// All batches laid end to end.
    pub fn flatten(&self) -> Vec<Slot> {
        self.slots().copied().collect()
    }
}

impl Learner {
    /// Draws the sample plan the next replay step would use.
    pub fn draw_plan(&mut self) -> Result<Plan> {
        let (len, s, k) = (self.reservoir.len(), self.config.s, self.config.k);
        let rng = &mut self.sample_rng;
        Ok(match self.config.algorithm {
            Algorithm::MerA1 => Plan::Batches(plan_mer_batches(len, s, k, rng)),
            Algorithm::MerObb => Plan::Batch(plan_big_batch(len, s, k, rng)),
            Algorithm::MerCel => {
                let (batch, pos) = plan_random_position_batch(len, k, rng);
                Plan::Positioned(batch, pos)
            }
            Algorithm::ErReservoir | Algorithm::ErTasks => Plan::Batch(plan_random_position_batch(len, k, rng).0),
            other => return Err(invalid_input!("{} does not replay", other.name())),
        })
    }

    /// Runs one replay step with an externally supplied plan.
    ///
    /// Two learners stepped with the same plans and examples share a sample
    /// log; their reservoir updates still use each learner's own buffer seed.
    pub fn step_planned(&mut self, example: &Example, plan: &Plan) -> Result<StepReport> {
        self.check(example)?;
        let len = self.reservoir.len();
        if plan.slots().any(|s| matches!(s, Slot::Memory(i) if *i >= len)) {
            return Err(invalid_input!("plan refers past the {len} buffered examples"));
        }
        self.current_task = Some(example.task_id);
        let loss = match (self.config.algorithm, plan) {
            (Algorithm::MerA1, Plan::Batches(batches)) => self.run_mer_a1(example, batches),
            (Algorithm::MerObb, Plan::Batch(batch)) => self.run_mer_sequence(example, batch, None),
            (Algorithm::MerCel, Plan::Positioned(batch, pos)) => self.run_mer_sequence(example, batch, Some(*pos)),
            (Algorithm::ErReservoir, Plan::Batch(batch)) => self.run_minibatch(example, batch, false),
            (Algorithm::ErTasks, Plan::Batch(batch)) => self.run_minibatch(example, batch, true),
            (algorithm, plan) => {
                return Err(invalid_input!("plan {plan:?} does not fit {}", algorithm.name()));
            }
        };
        self.reservoir.update(example.clone(), &mut self.buffer_rng);
        self.steps += 1;
        self.finish_step(loss)
    }

    pub(super) fn step_er_reservoir(&mut self, example: &Example) -> Result<f64> {
        self.replay_step(example)
    }

    pub(super) fn step_er_tasks(&mut self, example: &Example) -> Result<f64> {
        self.replay_step(example)
    }

    pub(super) fn step_mer_a1(&mut self, example: &Example) -> Result<f64> {
        self.replay_step(example)
    }

    pub(super) fn step_mer_obb(&mut self, example: &Example) -> Result<f64> {
        self.replay_step(example)
    }

    pub(super) fn step_mer_cel(&mut self, example: &Example) -> Result<f64> {
        self.replay_step(example)
    }

    fn replay_step(&mut self, example: &Example) -> Result<f64> {
        let plan = self.draw_plan()?;
        let loss = match (&plan, self.config.algorithm) {
            (Plan::Batches(batches), _) => self.run_mer_a1(example, batches),
            (Plan::Positioned(batch, pos), _) => self.run_mer_sequence(example, batch, Some(*pos)),
            (Plan::Batch(batch), Algorithm::MerObb) => self.run_mer_sequence(example, batch, None),
            (Plan::Batch(batch), algorithm) => self.run_minibatch(example, batch, algorithm == Algorithm::ErTasks),
        };
        self.reservoir.update(example.clone(), &mut self.buffer_rng);
        Ok(loss)
    }

    /// Algorithm 1: `s` batches of sequential single-example SGD, each folded
    /// back with rate `beta`, then the whole pass folded back with `gamma`.
    fn run_mer_a1(&mut self, example: &Example, batches: &[Vec<Slot>]) -> f64 {
        let (alpha, beta, gamma) = (self.config.alpha, self.config.beta, self.config.gamma);
        let memory = self.reservoir.items();
        let mut current_loss = f64::NAN;
        if gamma != 1.0 {
            self.across_anchor.values_mut().copy_from_slice(self.params.values());
        }
        for batch in batches {
            if beta != 1.0 {
                self.within_anchor.values_mut().copy_from_slice(self.params.values());
            }
            for slot in batch {
                let ex = slot.resolve(memory, example);
                let loss = sgd_example(&mut self.ws, &self.spec, self.params.values_mut(), ex, alpha);
                if *slot == Slot::Current && current_loss.is_nan() {
                    current_loss = loss;
                }
            }
            // Rate 1 is the identity, so the copy and blend are skipped.
            if beta != 1.0 {
                interpolate_in_place(self.params.values_mut(), self.within_anchor.values(), beta);
            }
        }
        if gamma != 1.0 {
            interpolate_in_place(self.params.values_mut(), self.across_anchor.values(), gamma);
        }
        current_loss
    }

    /// Sequential SGD over one batch followed by a `gamma` fold-back
    /// (Algorithms 6 and 7). With `boosted = Some(i)` slot `i` uses rate `s * alpha`.
    fn run_mer_sequence(&mut self, example: &Example, batch: &[Slot], boosted: Option<usize>) -> f64 {
        let (alpha, gamma) = (self.config.alpha, self.config.gamma);
        let boost = self.config.s as f64 * alpha;
        let memory = self.reservoir.items();
        let mut current_loss = f64::NAN;
        if gamma != 1.0 {
            self.across_anchor.values_mut().copy_from_slice(self.params.values());
        }
        for (i, slot) in batch.iter().enumerate() {
            let rate = if boosted == Some(i) { boost } else { alpha };
            let ex = slot.resolve(memory, example);
            let loss = sgd_example(&mut self.ws, &self.spec, self.params.values_mut(), ex, rate);
            if *slot == Slot::Current && current_loss.is_nan() {
                current_loss = loss;
            }
        }
        if gamma != 1.0 {
            interpolate_in_place(self.params.values_mut(), self.across_anchor.values(), gamma);
        }
        current_loss
    }

    /// One SGD step on the batch's mean loss (Algorithm 4), or with
    /// `balanced` on the sum over tasks of each task's mean loss (Algorithm 5).
    fn run_minibatch(&mut self, example: &Example, batch: &[Slot], balanced: bool) -> f64 {
        let memory = self.reservoir.items();
        let members: Vec<&Example> = batch.iter().map(|s| s.resolve(memory, example)).collect();
        let weights = batch_weights(&members, balanced);
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let mut current_loss = f64::NAN;
        for ((slot, ex), w) in batch.iter().zip(&members).zip(&weights) {
            let loss = accumulate_example(&mut self.ws, &self.spec, self.params.values(), ex, *w, &mut self.grad);
            if *slot == Slot::Current && current_loss.is_nan() {
                current_loss = loss;
            }
        }
        let alpha = self.config.alpha;
        for (p, g) in self.params.values_mut().iter_mut().zip(&self.grad) {
            *p -= alpha * g;
        }
        current_loss
    }
}

/// Per-member loss weights: `1 / k` for a plain mean, `1 / |group|` per task
/// group when balanced.
pub(crate) fn batch_weights(members: &[&Example], balanced: bool) -> Vec<f64> {
    if !balanced {
        let w = 1.0 / members.len() as f64;
        return alloc::vec![w; members.len()];
    }
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for ex in members {
        match counts.iter_mut().find(|(t, _)| *t == ex.task_id) {
            Some((_, c)) => *c += 1,
            None => counts.push((ex.task_id, 1)),
        }
    }
    members
        .iter()
        .map(|ex| {
            let c = counts.iter().find(|(t, _)| *t == ex.task_id).map_or(1, |(_, c)| *c);
            1.0 / c as f64
        })
        .collect()
}

/// `grad += scale * grad(example)`; returns the example's loss.
pub(crate) fn accumulate_example(
    ws: &mut Workspace,
    spec: &crate::nn::NetworkSpec,
    params: &[f64],
    example: &Example,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let head = spec.head_for_task(example.task_id).unwrap_or(0);
    ws.forward(spec, params, &example.x, head);
    let loss = ws.cross_entropy(example.y);
    ws.backward(spec, params);
    ws.accumulate_grad(spec, &example.x, scale, grad);
    loss
}

/// `params <- (1 - rate) * anchor + rate * params`.
pub(crate) fn interpolate_in_place(params: &mut [f64], anchor: &[f64], rate: f64) {
    let keep = 1.0 - rate;
    for (p, &a) in params.iter_mut().zip(anchor) {
        *p = keep * a + rate * *p;
    }
}
