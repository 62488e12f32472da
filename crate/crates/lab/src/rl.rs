//! Catcher-lite sweeps: both DQN variants over a list of seeds.

use std::fs;
use std::path::{Path, PathBuf};

use mer_core::rl::{train_dqn, DqnConfig, DqnOutcome, DqnVariant, Retention};
use serde::{Deserialize, Serialize};

use crate::runner::{parallel_map, RunError};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RlSeedSummary {
    pub seed: u64,
    pub variant: String,
    pub task0_final: f64,
    pub task0_peak: f64,
    pub retention: f64,
}

#[derive(Debug, Clone)]
pub struct RlRun {
    pub seed: u64,
    pub variant: DqnVariant,
    pub outcome: Result<DqnOutcome, String>,
}

impl RlRun {
    /// Task-0 retention measured from the end of task 0.
    pub fn task0(&self, config: &DqnConfig) -> Option<Retention> {
        self.outcome.as_ref().ok()?.retention(0, config.frames_per_task)
    }
}

/// Trains every (seed, variant) pair; runs are independent and go to worker threads.
pub fn run_rl(config: &DqnConfig, seeds: &[u64], variants: &[DqnVariant], threads: usize) -> Vec<RlRun> {
    let jobs: Vec<(u64, DqnVariant)> = seeds.iter().flat_map(|&s| variants.iter().map(move |&v| (s, v))).collect();
    parallel_map(&jobs, threads, |&(seed, variant)| {
        let c = DqnConfig { seed, ..config.clone() };
        RlRun { seed, variant, outcome: train_dqn(&c, variant).map_err(|e| e.to_string()) }
    })
}

/// Writes `scores.csv` (all checkpoints) and `retention.csv` (one row per run) into `dir`.
pub fn write_rl_results(dir: &Path, config: &DqnConfig, runs: &[RlRun]) -> Result<Vec<RlSeedSummary>, RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io { context: format!("creating {}", dir.display()), source })?;
    let scores = dir.join("scores.csv");
    let err = |path: &PathBuf| {
        let path = path.clone();
        move |e: csv::Error| RunError::Write { path: path.clone(), message: e.to_string() }
    };
    let mut w = csv::Writer::from_path(&scores).map_err(err(&scores))?;
    w.write_record(["seed", "variant", "frame", "task_evaluated", "mean_greedy_score_over_10_episodes"])
        .map_err(err(&scores))?;
    let mut summaries = Vec::new();
    for run in runs {
        let Ok(outcome) = &run.outcome else { continue };
        for r in &outcome.scores {
            w.write_record([
                run.seed.to_string(),
                run.variant.name().to_owned(),
                r.frame.to_string(),
                r.task_evaluated.to_string(),
                r.mean_score.to_string(),
            ])
            .map_err(err(&scores))?;
        }
        if let Some(t) = run.task0(config) {
            summaries.push(RlSeedSummary {
                seed: run.seed,
                variant: run.variant.name().to_owned(),
                task0_final: t.final_score,
                task0_peak: t.peak,
                retention: t.ratio(),
            });
        }
    }
    w.flush().map_err(|source| RunError::Io { context: format!("writing {}", scores.display()), source })?;
    let path = dir.join("retention.csv");
    let mut w = csv::Writer::from_path(&path).map_err(err(&path))?;
    for s in &summaries {
        w.serialize(s).map_err(err(&path))?;
    }
    w.flush().map_err(|source| RunError::Io { context: format!("writing {}", path.display()), source })?;
    Ok(summaries)
}
