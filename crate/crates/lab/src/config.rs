//! Experiment specification and its layered resolution:
//! preset defaults, then a TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use mer_core::learners::{Algorithm, LearnerConfig};
use mer_core::nn::InitScheme;
use mer_core::StreamSpec;
use serde::{Deserialize, Serialize};

use crate::presets::{parse_algorithm, parse_preset, preset_config, Benchmark};

/// Environment variable consulted when no data directory is configured.
pub const DATA_DIR_ENV: &str = "MER_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Hyperparameter overrides. `batch_size` counts replayed memories (k - 1).
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerOverrides {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub batch_size: Option<usize>,
    pub s: Option<usize>,
    pub ewc_lambda: Option<f64>,
    pub memory_strength: Option<f64>,
    pub fisher_samples: Option<usize>,
    pub gem_eps: Option<f64>,
    pub gem_max_iters: Option<usize>,
    pub independent_clone: Option<bool>,
    /// `fan_in` or `glorot`.
    pub init: Option<String>,
}

impl LearnerOverrides {
    fn merge(&mut self, other: &LearnerOverrides) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(alpha, beta, gamma, batch_size, s, ewc_lambda, memory_strength, fisher_samples, gem_eps, gem_max_iters, independent_clone);
        if other.init.is_some() {
            self.init = other.init.clone();
        }
    }

    pub fn apply(&self, c: &mut LearnerConfig) -> Result<(), ConfigError> {
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.beta {
            c.beta = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.batch_size {
            c.k = v + 1;
        }
        if let Some(v) = self.s {
            c.s = v;
        }
        if let Some(v) = self.ewc_lambda {
            c.ewc_lambda = v;
        }
        if let Some(v) = self.memory_strength {
            c.gem_memory_strength = v;
        }
        if let Some(v) = self.fisher_samples {
            c.ewc_fisher_samples = v;
        }
        if let Some(v) = self.gem_eps {
            c.gem_eps = v;
        }
        if let Some(v) = self.gem_max_iters {
            c.gem_max_iters = v;
        }
        if let Some(v) = self.independent_clone {
            c.independent_clone = v;
        }
        if let Some(name) = &self.init {
            c.init = InitScheme::from_name(name)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown init `{name}` (fan_in or glorot)")))?;
        }
        Ok(())
    }
}

/// One configuration layer; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub preset: Option<String>,
    pub benchmark: Option<String>,
    pub algorithm: Option<String>,
    pub buffer: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub data_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub hidden: Option<Vec<usize>>,
    pub tasks: Option<usize>,
    pub per_task: Option<usize>,
    pub alignment: Option<bool>,
    pub eval_matrix: Option<bool>,
    pub save_buffer: Option<bool>,
    pub learner: Option<LearnerOverrides>,
}

impl ConfigLayer {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_owned(), message: e.to_string().trim_end().to_owned() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::from_toml(&text, path)
    }

    /// Fields set in `top` win.
    pub fn merge(&mut self, top: &ConfigLayer) {
        macro_rules! take {
            ($($f:ident),*) => { $( if top.$f.is_some() { self.$f = top.$f.clone(); } )* };
        }
        take!(preset, benchmark, algorithm, buffer, seeds, data_dir, output_dir, hidden, tasks, per_task, alignment, eval_matrix, save_buffer);
        match (&mut self.learner, &top.learner) {
            (Some(mine), Some(theirs)) => mine.merge(theirs),
            (None, Some(theirs)) => self.learner = Some(theirs.clone()),
            _ => {}
        }
    }
}

/// Optional outputs of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Probes {
    pub alignment: bool,
    /// Fill the whole evaluation matrix (otherwise only the cells the metrics need).
    pub eval_matrix: bool,
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub benchmark: Benchmark,
    /// Stream shape; the per-run stream seed is derived from each run seed.
    pub stream: StreamSpec,
    /// Hyperparameters; the seed field is replaced per run.
    pub learner: LearnerConfig,
    pub hidden: Vec<usize>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub data_dir: PathBuf,
    pub probes: Probes,
    pub save_buffer: bool,
}

impl ExperimentSpec {
    pub fn algorithm(&self) -> Algorithm {
        self.learner.algorithm
    }

    pub fn buffer(&self) -> usize {
        self.learner.buffer_capacity
    }
}

/// `0,1,2`, `0..5` (end exclusive) or `0-4` (inclusive), or a mix separated by commas.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("bad seed `{t}` in `{s}`"));
        if let Some((a, b)) = part.split_once("..") {
            out.extend(num(a)?..num(b)?);
        } else if let Some((a, b)) = part.split_once('-') {
            out.extend(num(a)?..=num(b)?);
        } else {
            out.push(num(part)?);
        }
    }
    if out.is_empty() {
        return Err(format!("no seeds in `{s}`"));
    }
    Ok(out)
}

/// Resolves a merged layer into a spec. `env_data_dir` is the value of
/// [`DATA_DIR_ENV`], passed in so resolution stays a pure function.
pub fn resolve(layer: &ConfigLayer, env_data_dir: Option<PathBuf>) -> Result<ExperimentSpec, ConfigError> {
    let invalid = ConfigError::Invalid;
    let from_preset = layer.preset.as_deref().map(parse_preset).transpose().map_err(invalid)?;
    let benchmark = match (&layer.benchmark, from_preset) {
        (Some(b), _) => b.parse().map_err(invalid)?,
        (None, Some((b, _, _))) => b,
        (None, None) => return Err(invalid("no benchmark given (use --benchmark or --preset)".into())),
    };
    let algorithm = match (&layer.algorithm, from_preset) {
        (Some(a), _) => parse_algorithm(a).map_err(invalid)?,
        (None, Some((_, _, a))) => a,
        (None, None) => return Err(invalid("no algorithm given (use --algorithm or --preset)".into())),
    };
    if algorithm == Algorithm::ReptileOffline {
        return Err(invalid("reptile_offline is not a continual learner".into()));
    }
    let buffer = layer.buffer.or(from_preset.map(|p| p.1)).unwrap_or(benchmark.buffers()[0]);

    let mut learner = preset_config(benchmark, buffer, algorithm);
    if let Some(o) = &layer.learner {
        o.apply(&mut learner)?;
    }
    learner.validate().map_err(|e| invalid(e.to_string()))?;

    let mut stream = StreamSpec::standard(benchmark.stream_kind(), 0);
    if let Some(t) = layer.tasks {
        stream.task_count = t;
    }
    if let Some(n) = layer.per_task {
        stream.train_per_task = n;
    }
    stream.validate().map_err(|e| invalid(e.to_string()))?;

    let seeds = layer.seeds.clone().unwrap_or_else(|| (0..5).collect());
    if seeds.is_empty() {
        return Err(invalid("at least one seed is required".into()));
    }
    let hidden = layer.hidden.clone().unwrap_or_else(|| vec![100, 100]);
    if hidden.contains(&0) {
        return Err(invalid("hidden layer widths must be positive".into()));
    }
    let output_dir = layer.output_dir.clone().unwrap_or_else(|| {
        PathBuf::from("results").join(format!("{}-{}-{}", benchmark.short(), buffer, algorithm.name()))
    });
    let data_dir = layer.data_dir.clone().or(env_data_dir).unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR));
    let probes = Probes {
        alignment: layer.alignment.unwrap_or(false),
        eval_matrix: layer.eval_matrix.unwrap_or(benchmark != Benchmark::ManyPermutations),
    };
    Ok(ExperimentSpec {
        benchmark,
        stream,
        learner,
        hidden,
        seeds,
        output_dir,
        data_dir,
        probes,
        save_buffer: layer.save_buffer.unwrap_or(false),
    })
}

/// Reads the data-directory environment variable.
pub fn env_data_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}
