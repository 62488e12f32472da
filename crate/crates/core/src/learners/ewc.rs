//! Elastic weight consolidation.

use alloc::vec;
use alloc::vec::Vec;

use super::{sgd_example, Learner};
use crate::error::Result;
use crate::nn::{fisher_diagonal, loss_and_grad, GradResult, NetworkSpec, ParamVector};
use crate::replay::ReservoirBuffer;
use crate::rng::Rng;
use crate::streams::Example;

/// Consolidated tasks plus a uniform sample of the current task's examples.
///
/// The penalty gradient `2 * lambda * sum_t F_t * (theta - theta*_t)` is
/// evaluated from running sums of `F_t` and `F_t * theta*_t`, so a step costs
/// the same however many tasks have been consolidated.
#[derive(Debug, Clone)]
pub struct EwcState {
    anchors: Vec<(ParamVector, ParamVector)>,
    fisher_sum: Vec<f64>,
    weighted_anchor_sum: Vec<f64>,
    task_sample: Option<ReservoirBuffer<Example>>,
}

impl EwcState {
    pub fn new(spec: &NetworkSpec) -> Self {
        let n = spec.param_count();
        Self { anchors: Vec::new(), fisher_sum: vec![0.0; n], weighted_anchor_sum: vec![0.0; n], task_sample: None }
    }

    /// `(anchor parameters, Fisher diagonal)` per consolidated task.
    pub fn anchors(&self) -> &[(ParamVector, ParamVector)] {
        &self.anchors
    }

    pub fn consolidated(&self) -> usize {
        self.anchors.len()
    }

    /// `lambda * sum_t sum_i F_t,i * (theta_i - theta*_t,i)^2`.
    pub fn penalty(&self, params: &ParamVector, lambda: f64) -> f64 {
        let mut total = 0.0;
        for (anchor, fisher) in &self.anchors {
            for ((&p, &a), &f) in params.values().iter().zip(anchor.values()).zip(fisher.values()) {
                let d = p - a;
                total += f * d * d;
            }
        }
        lambda * total
    }

    pub fn penalty_grad(&self, params: &ParamVector, lambda: f64) -> ParamVector {
        let mut grad = ParamVector::zeros(params.spec());
        if self.anchors.is_empty() {
            return grad;
        }
        let two_lambda = 2.0 * lambda;
        for (((g, &p), &f), &fa) in
            grad.values_mut().iter_mut().zip(params.values()).zip(&self.fisher_sum).zip(&self.weighted_anchor_sum)
        {
            *g = two_lambda * (f * p - fa);
        }
        grad
    }

    fn remember(&mut self, example: &Example, cap: usize, rng: &mut Rng) {
        self.task_sample.get_or_insert_with(|| ReservoirBuffer::new(cap)).update(example.clone(), rng);
    }

    fn consolidate(&mut self, params: &ParamVector) -> Result<()> {
        let Some(sample) = self.task_sample.take() else {
            return Ok(());
        };
        if sample.is_empty() {
            return Ok(());
        }
        let fisher = fisher_diagonal(params, sample.items())?;
        for (((fs, fa), &f), &p) in self
            .fisher_sum
            .iter_mut()
            .zip(self.weighted_anchor_sum.iter_mut())
            .zip(fisher.values())
            .zip(params.values())
        {
            *fs += f;
            *fa += f * p;
        }
        self.anchors.push((params.clone(), fisher));
        Ok(())
    }
}

impl Learner {
    pub(super) fn step_ewc(&mut self, example: &Example, previous: Option<usize>) -> Result<f64> {
        let ewc = self.ewc.as_mut().expect("EWC state exists for the ewc algorithm");
        if previous.is_some_and(|p| p != example.task_id) {
            ewc.consolidate(&self.params)?;
        }
        let (alpha, lambda) = (self.config.alpha, self.config.ewc_lambda);
        let loss = if lambda != 0.0 && !ewc.anchors.is_empty() {
            let spec = &self.spec;
            let head = spec.head_for_task(example.task_id)?;
            let params = self.params.values_mut();
            self.ws.forward(spec, params, &example.x, head);
            let loss = self.ws.cross_entropy(example.y);
            self.ws.backward(spec, params);
            // Penalty part first: it reads the pre-step parameters.
            let scale = alpha * 2.0 * lambda;
            for ((p, &f), &fa) in params.iter_mut().zip(&ewc.fisher_sum).zip(&ewc.weighted_anchor_sum) {
                *p -= scale * (f * *p - fa);
            }
            self.ws.apply_sgd(spec, &example.x, alpha, params);
            loss
        } else {
            sgd_example(&mut self.ws, &self.spec, self.params.values_mut(), example, alpha)
        };
        ewc.remember(example, self.config.ewc_fisher_samples, &mut self.sample_rng);
        Ok(loss)
    }

    /// Example loss plus EWC penalty, and its gradient, at the current parameters.
    pub fn ewc_loss_and_grad(&self, example: &Example) -> Result<GradResult> {
        let mut r = loss_and_grad(&self.params, example)?;
        if let Some(ewc) = &self.ewc {
            let lambda = self.config.ewc_lambda;
            r.loss += ewc.penalty(&self.params, lambda);
            let pg = ewc.penalty_grad(&self.params, lambda);
            for (g, p) in r.grad.values_mut().iter_mut().zip(pg.values()) {
                *g += p;
            }
        }
        Ok(r)
    }
}
