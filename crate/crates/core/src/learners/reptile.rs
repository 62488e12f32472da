use alloc::sync::Arc;
use alloc::vec::Vec;

use super::replay_steps::{accumulate_example, interpolate_in_place};
use super::LearnerConfig;
use crate::error::{invalid_input, Result};
use crate::nn::{check_example, init_params_with, NetworkSpec, ParamVector, Workspace};
use crate::rng::{SeedSource, SeedStreams};
use crate::streams::Example;

/// Reptile on a stationary dataset.
///
/// Each meta-iteration takes `s` mini-batch SGD steps on batches of `k`
/// examples drawn uniformly (without replacement within a batch when the
/// dataset is large enough), then moves the starting point `beta` of the way
/// toward the result. Stops after `step_budget` mini-batch steps.
pub fn reptile_offline(
    spec: &Arc<NetworkSpec>,
    dataset: &[Example],
    config: &LearnerConfig,
    step_budget: usize,
) -> Result<ParamVector> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(invalid_input!("reptile_offline needs a nonempty dataset"));
    }
    for ex in dataset {
        check_example(spec, ex)?;
    }
    let seeds = SeedStreams::new(config.seed);
    let mut params = init_params_with(spec, seeds.seed(SeedSource::Init), config.init);
    let mut rng = seeds.rng(SeedSource::Sampling);
    let mut ws = Workspace::new(spec);
    let mut grad = alloc::vec![0.0; spec.param_count()];
    let mut anchor = params.values().to_vec();
    let mut remaining = step_budget;
    while remaining > 0 {
        anchor.copy_from_slice(params.values());
        for _ in 0..config.s.min(remaining) {
            let batch: Vec<usize> = if dataset.len() >= config.k {
                rand::seq::index::sample(&mut rng, dataset.len(), config.k).into_vec()
            } else {
                use rand::Rng as _;
                (0..config.k).map(|_| rng.random_range(0..dataset.len())).collect()
            };
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in &batch {
                accumulate_example(&mut ws, spec, params.values(), &dataset[i], scale, &mut grad);
            }
            for (p, g) in params.values_mut().iter_mut().zip(&grad) {
                *p -= config.alpha * g;
            }
            remaining -= 1;
        }
        if config.beta != 1.0 {
            interpolate_in_place(params.values_mut(), &anchor, config.beta);
        }
    }
    Ok(params)
}
