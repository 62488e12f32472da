use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mer_core::rl::{DqnConfig, DqnVariant};
use mer_lab::config::{env_data_dir, parse_seeds, resolve, ConfigLayer, ExperimentSpec, LearnerOverrides};
use mer_lab::rl::{run_rl, write_rl_results};
use mer_lab::runner::{default_threads, run_experiments, validate_dir, ExperimentResult, Stat, Summary};

#[derive(Parser)]
#[command(name = "mer", version, about = "Continual learning experiments: meta-experience replay and baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over its seeds.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
    },
    /// Run the cartesian product of comma-separated hyperparameter lists.
    Grid {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: HyperGrid,
    },
    /// Continual Catcher-lite with DQN-ER and DQN-MER.
    Rl(RlArgs),
    /// Like `run`, recording the gradient-alignment trace.
    Probe {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
    },
    /// Validate result directories and print their summaries.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in setting such as `rot-5120-mer_a1`.
    #[arg(long)]
    preset: Option<String>,
    /// rot, perm, many or synthetic.
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    buffer: Option<usize>,
    /// `0,1,2`, `0..5` or `0-4`.
    #[arg(long)]
    seeds: Option<String>,
    /// Directory with the MNIST IDX files (falls back to $MER_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    per_task: Option<usize>,
    /// Record the gradient-alignment probe.
    #[arg(long)]
    alignment: bool,
    /// Only evaluate the cells the summary metrics need.
    #[arg(long)]
    sparse_matrix: bool,
    /// Write each seed's final replay buffer.
    #[arg(long)]
    save_buffer: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn layer(&self) -> Result<ConfigLayer, String> {
        let mut layer = match &self.config {
            Some(p) => ConfigLayer::load(p).map_err(|e| e.to_string())?,
            None => ConfigLayer::default(),
        };
        let flags = ConfigLayer {
            preset: self.preset.clone(),
            benchmark: self.benchmark.clone(),
            algorithm: self.algorithm.clone(),
            buffer: self.buffer,
            seeds: self.seeds.as_deref().map(parse_seeds).transpose()?,
            data_dir: self.data_dir.clone(),
            output_dir: self.out.clone(),
            hidden: self.hidden.clone(),
            tasks: self.tasks,
            per_task: self.per_task,
            alignment: self.alignment.then_some(true),
            eval_matrix: self.sparse_matrix.then_some(false),
            save_buffer: self.save_buffer.then_some(true),
            learner: None,
        };
        layer.merge(&flags);
        Ok(layer)
    }

    fn threads(&self) -> usize {
        self.jobs.unwrap_or_else(default_threads)
    }
}

#[derive(Args, Clone, Default)]
struct Hyper {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Replayed memories per batch (k - 1).
    #[arg(long)]
    batch_size: Option<usize>,
    /// Batches per example.
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    ewc_lambda: Option<f64>,
    #[arg(long)]
    memory_strength: Option<f64>,
    /// Weight initialization: fan_in or glorot.
    #[arg(long)]
    init: Option<String>,
}

impl Hyper {
    fn overrides(&self) -> LearnerOverrides {
        LearnerOverrides {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            batch_size: self.batch_size,
            s: self.s,
            ewc_lambda: self.ewc_lambda,
            memory_strength: self.memory_strength,
            init: self.init.clone(),
            ..Default::default()
        }
    }
}

#[derive(Args, Clone)]
struct HyperGrid {
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    batch_size: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    s: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    ewc_lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    memory_strength: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    init: Vec<String>,
}

impl HyperGrid {
    /// Every combination, each with a directory suffix naming its values.
    fn points(&self) -> Vec<(Hyper, String)> {
        fn axis<T: Clone + ToString>(
            points: Vec<(Hyper, String)>,
            values: &[T],
            name: &str,
            set: fn(&mut Hyper, T),
        ) -> Vec<(Hyper, String)> {
            if values.is_empty() {
                return points;
            }
            points
                .into_iter()
                .flat_map(|(h, tag)| {
                    values.iter().map(move |v| {
                        let mut h = h.clone();
                        set(&mut h, v.clone());
                        (h, format!("{tag}-{name}{}", v.to_string()))
                    })
                })
                .collect()
        }
        let mut p = vec![(Hyper::default(), String::new())];
        p = axis(p, &self.alpha, "a", |h, v| h.alpha = Some(v));
        p = axis(p, &self.beta, "b", |h, v| h.beta = Some(v));
        p = axis(p, &self.gamma, "g", |h, v| h.gamma = Some(v));
        p = axis(p, &self.batch_size, "bs", |h, v| h.batch_size = Some(v));
        p = axis(p, &self.s, "s", |h, v| h.s = Some(v));
        p = axis(p, &self.ewc_lambda, "lam", |h, v| h.ewc_lambda = Some(v));
        p = axis(p, &self.memory_strength, "ms", |h, v| h.memory_strength = Some(v));
        p = axis(p, &self.init, "init-", |h, v| h.init = Some(v));
        p
    }
}

#[derive(Args)]
struct RlArgs {
    #[arg(long, default_value = "0,1,2")]
    seeds: String,
    /// er, mer or both.
    #[arg(long, default_value = "both")]
    variant: String,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    frames_per_task: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Replayed transitions per batch (k - 1).
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    buffer: Option<usize>,
    #[arg(long, default_value = "results/rl")]
    out: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
}

fn with_overrides(layer: &ConfigLayer, hyper: &Hyper) -> ConfigLayer {
    let mut l = layer.clone();
    l.merge(&ConfigLayer { learner: Some(hyper.overrides()), ..Default::default() });
    l
}

fn print_result(r: &ExperimentResult) {
    print_summary(&r.spec.output_dir.display().to_string(), &r.summary);
    for f in &r.failed {
        eprintln!("  seed {} failed: {}", f.seed, f.error);
    }
}

fn fmt_stat(s: &Option<Stat>) -> String {
    s.as_ref().map_or("-".into(), |s| format!("{:.2} ± {:.2}", s.mean, s.std))
}

fn print_summary(label: &str, s: &Summary) {
    println!(
        "{label}: {} {} buffer {} | RA {} | LA {} | BTI {} | FTI {} | {}/{} seeds",
        s.benchmark,
        s.algorithm,
        s.buffer,
        fmt_stat(&s.metrics.ra),
        fmt_stat(&s.metrics.la),
        fmt_stat(&s.metrics.bti),
        fmt_stat(&s.metrics.fti),
        s.completed,
        s.seeds.len(),
    );
    if let Some(a) = &s.alignment {
        println!("  gradient alignment {:.4} ± {:.4}", a.mean, a.std);
    }
}

fn run_specs(specs: &[ExperimentSpec], threads: usize) -> Result<(), String> {
    let results = run_experiments(specs, threads, |line| eprintln!("{line}")).map_err(|e| e.to_string())?;
    results.iter().for_each(print_result);
    if results.iter().any(|r| !r.failed.is_empty()) {
        return Err("some seeds failed".into());
    }
    Ok(())
}

fn run_single(common: &Common, hyper: &Hyper, alignment: bool) -> Result<(), String> {
    let mut layer = with_overrides(&common.layer()?, hyper);
    if alignment {
        layer.alignment = Some(true);
    }
    let spec = resolve(&layer, env_data_dir()).map_err(|e| e.to_string())?;
    run_specs(&[spec], common.threads())?;
    Ok(())
}

fn run_grid(common: &Common, grid: &HyperGrid) -> Result<(), String> {
    let base = common.layer()?;
    let root = resolve(&base, env_data_dir()).map_err(|e| e.to_string())?.output_dir;
    let specs = grid
        .points()
        .into_iter()
        .map(|(hyper, tag)| {
            let mut layer = with_overrides(&base, &hyper);
            let name = tag.trim_start_matches('-');
            layer.output_dir = Some(if name.is_empty() { root.clone() } else { root.join(name) });
            resolve(&layer, env_data_dir()).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    run_specs(&specs, common.threads())
}

fn run_rl_cmd(args: &RlArgs) -> Result<(), String> {
    let mut config = DqnConfig::default();
    if let Some(v) = args.tasks {
        config.task_count = v;
    }
    if let Some(v) = args.frames_per_task {
        config.frames_per_task = v;
    }
    if let Some(v) = args.alpha {
        config.alpha = v;
    }
    if let Some(v) = args.beta {
        config.beta = v;
    }
    if let Some(v) = args.gamma {
        config.gamma_meta = v;
    }
    if let Some(v) = args.batch_size {
        config.k = v + 1;
    }
    if let Some(v) = args.buffer {
        config.buffer_capacity = v;
    }
    config.validate().map_err(|e| e.to_string())?;
    let variants = match args.variant.as_str() {
        "er" => vec![DqnVariant::Er],
        "mer" => vec![DqnVariant::Mer],
        "both" => vec![DqnVariant::Er, DqnVariant::Mer],
        other => return Err(format!("unknown variant `{other}` (er, mer or both)")),
    };
    let seeds = parse_seeds(&args.seeds)?;
    let runs = run_rl(&config, &seeds, &variants, args.jobs.unwrap_or_else(default_threads));
    for r in &runs {
        if let Err(e) = &r.outcome {
            eprintln!("seed {} {}: FAILED: {e}", r.seed, r.variant.name());
        }
    }
    let summaries = write_rl_results(&args.out, &config, &runs).map_err(|e| e.to_string())?;
    for s in &summaries {
        println!(
            "seed {} {}: task-0 final {:.2}, peak {:.2}, retention {:.2}",
            s.seed, s.variant, s.task0_final, s.task0_peak, s.retention
        );
    }
    println!("scores written to {}", args.out.display());
    Ok(())
}

fn report(dirs: &[PathBuf]) -> Result<(), String> {
    let mut bad = 0;
    for dir in dirs {
        match validate_dir(dir) {
            Ok(s) => print_summary(&dir.display().to_string(), &s),
            Err(e) => {
                eprintln!("{}: {e}", dir.display());
                bad += 1;
            }
        }
    }
    if bad > 0 {
        return Err(format!("{bad} of {} directories failed validation", dirs.len()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, hyper } => run_single(common, hyper, false),
        Command::Probe { common, hyper } => run_single(common, hyper, true),
        Command::Grid { common, grid } => run_grid(common, grid),
        Command::Rl(args) => run_rl_cmd(args),
        Command::Report { dirs } => report(dirs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
