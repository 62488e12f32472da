use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{Action, CatcherConfig, CatcherLite, ACTIONS, FEATURES};
use crate::error::{invalid_spec, Error, Result};
use crate::nn::{argmax, init_params, GradResult, NetworkSpec, ParamVector, Workspace};
use crate::replay::{plan_mer_batches, ReservoirBuffer, Slot};
use crate::rng::{derive_seed, rng_from_seed, Rng, SeedSource, SeedStreams};

/// One stored `(s, a, r, s', done)` tuple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: [f32; FEATURES],
    pub a: usize,
    pub r: f64,
    pub s_next: [f32; FEATURES],
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqnVariant {
    /// One mini-batch SGD step on the replay batch.
    Er,
    /// Within- and across-batch Reptile interpolation around sequential SGD.
    Mer,
}

impl DqnVariant {
    pub fn name(&self) -> &'static str {
        match self {
            DqnVariant::Er => "er",
            DqnVariant::Mer => "mer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_meta: f64,
    /// Batch size including the current transition.
    pub k: usize,
    /// Number of batches per frame.
    pub steps: usize,
    pub buffer_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_frames: u64,
    pub discount: f64,
    pub target_sync_episodes: u64,
    pub task_count: usize,
    pub frames_per_task: u64,
    /// Training and evaluation games are cut off after this many frames.
    pub max_episode_frames: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub hidden: Vec<usize>,
    pub env: CatcherConfig,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 1.0,
            gamma_meta: 0.3,
            k: 17,
            steps: 1,
            buffer_capacity: 50_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_frames: 5_000,
            discount: 0.9,
            target_sync_episodes: 1,
            task_count: 6,
            frames_per_task: 10_000,
            max_episode_frames: 1_000,
            eval_interval: 1_000,
            eval_episodes: 10,
            hidden: vec![64, 64],
            env: CatcherConfig::default(),
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| r.is_finite() && r >= 0.0;
        if !rate_ok(self.alpha) || !rate_ok(self.beta) || !rate_ok(self.gamma_meta) {
            return Err(invalid_spec!("learning rates must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(invalid_spec!("discount must lie in [0, 1), got {}", self.discount));
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return Err(invalid_spec!("epsilon must lie in [0, 1], got {e}"));
            }
        }
        if self.k == 0 || self.steps == 0 {
            return Err(invalid_spec!("k and steps must be at least 1"));
        }
        if self.task_count == 0 || self.frames_per_task == 0 || self.max_episode_frames == 0 {
            return Err(invalid_spec!("task_count, frames_per_task and max_episode_frames must be positive"));
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 || self.target_sync_episodes == 0 {
            return Err(invalid_spec!("eval_interval, eval_episodes and target_sync_episodes must be positive"));
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`.
    pub fn epsilon(&self, frame: u64) -> f64 {
        if frame >= self.epsilon_decay_frames {
            return self.epsilon_end;
        }
        let f = frame as f64 / self.epsilon_decay_frames as f64;
        self.epsilon_start + f * (self.epsilon_end - self.epsilon_start)
    }

    pub fn total_frames(&self) -> u64 {
        self.frames_per_task * self.task_count as u64
    }

    pub fn network(&self) -> Result<NetworkSpec> {
        NetworkSpec::new(FEATURES, &self.hidden, ACTIONS)
    }
}

pub fn huber(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

pub fn huber_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// `r` at the end of a game, otherwise `r + discount * max_a Qhat(s', a)`.
pub fn dqn_target(t: &Transition, target: &ParamVector, discount: f64, ws: &mut Workspace) -> f64 {
    if t.done {
        return t.r;
    }
    let q = ws.forward(target.spec(), target.values(), &t.s_next, 0);
    t.r + discount * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Huber loss of `Q(s, a)` against `y` with its exact parameter gradient.
pub fn q_loss_and_grad(params: &ParamVector, t: &Transition, y: f64) -> GradResult {
    let spec = params.spec();
    let mut ws = Workspace::new(spec);
    let loss = huber_output(&mut ws, spec, params.values(), t, y);
    ws.backward(spec, params.values());
    let mut grad = ParamVector::zeros(spec);
    ws.accumulate_grad(spec, &t.s, 1.0, grad.values_mut());
    GradResult { loss, grad }
}

/// Forward pass plus Huber output gradient; leaves the workspace ready for `backward`.
fn huber_output(ws: &mut Workspace, spec: &NetworkSpec, params: &[f64], t: &Transition, y: f64) -> f64 {
    let q = ws.forward(spec, params, &t.s, 0)[t.a];
    let out = ws.output_grad_mut();
    out.iter_mut().for_each(|g| *g = 0.0);
    out[t.a] = huber_grad(q - y);
    huber(q - y)
}

fn interpolate_in_place(params: &mut [f64], anchor: &[f64], rate: f64) {
    if rate == 1.0 {
        return;
    }
    let keep = 1.0 - rate;
    for (p, &a) in params.iter_mut().zip(anchor) {
        *p = keep * a + rate * *p;
    }
}

/// Q-network, target network and scratch space.
#[derive(Debug, Clone)]
struct Agent {
    spec: Arc<NetworkSpec>,
    q: ParamVector,
    target: ParamVector,
    ws: Workspace,
    target_ws: Workspace,
    across: Vec<f64>,
    within: Vec<f64>,
    grad: Vec<f64>,
}

impl Agent {
    fn new(spec: Arc<NetworkSpec>, seed: u64) -> Self {
        let q = init_params(&spec, seed);
        let n = q.len();
        Self {
            ws: Workspace::new(&spec),
            target_ws: Workspace::new(&spec),
            target: q.clone(),
            q,
            spec,
            across: vec![0.0; n],
            within: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    fn greedy(&mut self, s: &[f32; FEATURES]) -> usize {
        argmax(self.ws.forward(&self.spec, self.q.values(), s, 0))
    }

    /// Sequential SGD inside each batch with within-batch (`beta`) and
    /// across-batch (`gamma`) interpolation; returns the mean loss.
    fn mer_update(&mut self, batches: &[Vec<&Transition>], c: &DqnConfig) -> f64 {
        let (mut total, mut count) = (0.0, 0usize);
        self.across.copy_from_slice(self.q.values());
        for batch in batches {
            self.within.copy_from_slice(self.q.values());
            for t in batch {
                let y = dqn_target(t, &self.target, c.discount, &mut self.target_ws);
                total += huber_output(&mut self.ws, &self.spec, self.q.values(), t, y);
                self.ws.backward(&self.spec, self.q.values());
                self.ws.apply_sgd(&self.spec, &t.s, c.alpha, self.q.values_mut());
                count += 1;
            }
            interpolate_in_place(self.q.values_mut(), &self.within, c.beta);
        }
        interpolate_in_place(self.q.values_mut(), &self.across, c.gamma_meta);
        total / count.max(1) as f64
    }

    /// One SGD step on the mean Huber loss of `batch`; returns that loss.
    fn er_update(&mut self, batch: &[&Transition], c: &DqnConfig) -> f64 {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut total = 0.0;
        for t in batch {
            let y = dqn_target(t, &self.target, c.discount, &mut self.target_ws);
            total += huber_output(&mut self.ws, &self.spec, self.q.values(), t, y);
            self.ws.backward(&self.spec, self.q.values());
            self.ws.accumulate_grad(&self.spec, &t.s, scale, &mut self.grad);
        }
        for (p, &g) in self.q.values_mut().iter_mut().zip(&self.grad) {
            *p -= c.alpha * g;
        }
        total * scale
    }

    fn sync_target(&mut self) {
        self.target.values_mut().copy_from_slice(self.q.values());
    }
}

/// Mean greedy score (pellets caught) over the evaluation games of one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub frame: u64,
    pub task_evaluated: usize,
    pub mean_score: f64,
}

#[derive(Debug, Clone)]
pub struct DqnOutcome {
    pub params: ParamVector,
    pub scores: Vec<ScoreRecord>,
    pub episodes: u64,
    pub frames: u64,
}

impl DqnOutcome {
    /// Task `task`'s score series in frame order.
    pub fn series(&self, task: usize) -> Vec<(u64, f64)> {
        self.scores.iter().filter(|r| r.task_evaluated == task).map(|r| (r.frame, r.mean_score)).collect()
    }

    /// Last score of `task` and its best score at checkpoints from `from_frame` on.
    pub fn retention(&self, task: usize, from_frame: u64) -> Option<Retention> {
        let series = self.series(task);
        let last = series.last()?.1;
        let peak = series.iter().filter(|(f, _)| *f >= from_frame).map(|&(_, s)| s).reduce(f64::max)?;
        Some(Retention { final_score: last, peak })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retention {
    pub final_score: f64,
    pub peak: f64,
}

impl Retention {
    /// `final / peak`; 1 when the peak is not positive and the final score matches it.
    pub fn ratio(&self) -> f64 {
        if self.peak > 0.0 {
            self.final_score / self.peak
        } else if self.final_score >= self.peak {
            1.0
        } else {
            0.0
        }
    }
}

/// A DQN training run that can be advanced one frame at a time.
#[derive(Debug, Clone)]
pub struct DqnRun {
    config: DqnConfig,
    variant: DqnVariant,
    agent: Agent,
    env: CatcherLite,
    buffer: ReservoirBuffer<Transition>,
    act_rng: Rng,
    buffer_rng: Rng,
    sample_rng: Rng,
    eval_seed: u64,
    frame: u64,
    episode: u64,
    episode_frames: u64,
    task: usize,
    scores: Vec<ScoreRecord>,
}

impl DqnRun {
    pub fn new(config: DqnConfig, variant: DqnVariant) -> Result<Self> {
        config.validate()?;
        let seeds = SeedStreams::new(config.seed);
        let env_seed = seeds.seed(SeedSource::Environment);
        let agent = Agent::new(Arc::new(config.network()?), seeds.seed(SeedSource::Init));
        Ok(Self {
            env: CatcherLite::new(config.env, 0, rng_from_seed(env_seed)),
            act_rng: rng_from_seed(derive_seed(env_seed, 1)),
            buffer: ReservoirBuffer::new(config.buffer_capacity),
            buffer_rng: seeds.rng(SeedSource::Buffer),
            sample_rng: seeds.rng(SeedSource::Sampling),
            eval_seed: seeds.seed(SeedSource::Probe),
            frame: 0,
            episode: 0,
            episode_frames: 0,
            task: 0,
            scores: Vec::new(),
            agent,
            variant,
            config,
        })
    }

    pub fn params(&self) -> &ParamVector {
        &self.agent.q
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn task(&self) -> usize {
        self.task
    }

    pub fn buffer(&self) -> &ReservoirBuffer<Transition> {
        &self.buffer
    }

    pub fn scores(&self) -> &[ScoreRecord] {
        &self.scores
    }

    pub fn is_finished(&self) -> bool {
        self.frame >= self.config.total_frames()
    }

    fn act(&mut self, s: &[f32; FEATURES]) -> usize {
        if self.act_rng.random::<f64>() < self.config.epsilon(self.frame) {
            self.act_rng.random_range(0..ACTIONS)
        } else {
            self.agent.greedy(s)
        }
    }

    /// Trains on `transition` the way the configured variant does; returns the batch loss.
    pub fn learn(&mut self, transition: Transition) -> Result<f64> {
        self.buffer.update(transition, &mut self.buffer_rng);
        let c = &self.config;
        let batches = match self.variant {
            DqnVariant::Mer => plan_mer_batches(self.buffer.len(), c.steps, c.k, &mut self.sample_rng),
            DqnVariant::Er => plan_mer_batches(self.buffer.len(), 1, c.k, &mut self.sample_rng),
        };
        let items = self.buffer.items();
        let resolve = |s: &Slot| match *s {
            Slot::Current => &transition,
            Slot::Memory(i) => &items[i],
        };
        let batches: Vec<Vec<&Transition>> = batches.iter().map(|b| b.iter().map(resolve).collect()).collect();
        let loss = match self.variant {
            DqnVariant::Mer => self.agent.mer_update(&batches, &self.config),
            DqnVariant::Er => self.agent.er_update(&batches[0], &self.config),
        };
        if !loss.is_finite() || !self.agent.q.is_finite() {
            return Err(Error::Numerical(alloc::format!(
                "{} DQN diverged at frame {} (loss {loss})",
                self.variant.name(),
                self.frame
            )));
        }
        Ok(loss)
    }

    /// Plays and learns from one frame, then handles episode ends, task
    /// switches and evaluation checkpoints.
    pub fn advance(&mut self) -> Result<()> {
        let state = *self.env.state();
        let s = state.features();
        let a = self.act(&s);
        let out = self.env.step(Action::from_index(a).expect("action index below ACTIONS"));
        self.learn(Transition { s, a, r: out.reward, s_next: out.state.features(), done: out.done })?;
        self.frame += 1;
        self.episode_frames += 1;

        let mut episode_over = out.done || self.episode_frames >= self.config.max_episode_frames;
        if self.frame % self.config.frames_per_task == 0 && self.task + 1 < self.config.task_count {
            self.task += 1;
            self.env.set_task(self.task);
            episode_over = true;
        }
        if episode_over {
            self.episode += 1;
            self.episode_frames = 0;
            if self.episode % self.config.target_sync_episodes == 0 {
                self.agent.sync_target();
            }
            self.env.reset();
        }
        if self.frame % self.config.eval_interval == 0 {
            self.evaluate_checkpoint();
        }
        Ok(())
    }

    /// Greedy score on every task seen so far; task 0 is always included.
    fn evaluate_checkpoint(&mut self) {
        let seen = (self.frame - 1) / self.config.frames_per_task;
        let seen = (seen as usize).min(self.config.task_count - 1);
        for task in 0..=seen {
            let mean_score = self.greedy_score(task);
            self.scores.push(ScoreRecord { frame: self.frame, task_evaluated: task, mean_score });
        }
    }

    /// Mean pellets caught by the greedy policy. Evaluation games use fixed
    /// seeds so checkpoints are comparable.
    pub fn greedy_score(&mut self, task: usize) -> f64 {
        let (caught, _) = self.greedy_games(task);
        caught as f64 / self.config.eval_episodes as f64
    }

    /// Fraction of landed pellets the greedy policy catches.
    pub fn greedy_catch_rate(&mut self, task: usize) -> f64 {
        let (caught, landed) = self.greedy_games(task);
        if landed == 0 {
            0.0
        } else {
            caught as f64 / landed as f64
        }
    }

    /// Pellets caught and pellets landed over the evaluation games of `task`.
    fn greedy_games(&mut self, task: usize) -> (u64, u64) {
        let (mut caught, mut landed) = (0, 0);
        for e in 0..self.config.eval_episodes {
            let seed = derive_seed(self.eval_seed, ((task as u64) << 32) | e as u64);
            let mut env = CatcherLite::new(self.config.env, task, rng_from_seed(seed));
            for _ in 0..self.config.max_episode_frames {
                let s = env.state().features();
                let a = self.agent.greedy(&s);
                let out = env.step(Action::from_index(a).expect("action index below ACTIONS"));
                if out.reward != 0.0 {
                    landed += 1;
                }
                if out.reward > 0.0 {
                    caught += 1;
                }
                if out.done {
                    break;
                }
            }
        }
        (caught, landed)
    }

    pub fn finish(self) -> DqnOutcome {
        DqnOutcome { params: self.agent.q, scores: self.scores, episodes: self.episode, frames: self.frame }
    }
}

/// Trains for `task_count * frames_per_task` frames.
pub fn train_dqn(config: &DqnConfig, variant: DqnVariant) -> Result<DqnOutcome> {
    let mut run = DqnRun::new(config.clone(), variant)?;
    while !run.is_finished() {
        run.advance()?;
    }
    Ok(run.finish())
}

/// Replays a fixed transition log through both update rules; used to check
/// that MER with unit meta rates reduces to ER.
#[doc(hidden)]
pub fn replay_log(config: &DqnConfig, variant: DqnVariant, log: &[Transition]) -> Result<ParamVector> {
    let mut run = DqnRun::new(config.clone(), variant)?;
    for (i, t) in log.iter().enumerate() {
        run.learn(*t)?;
        if (i as u64 + 1) % 50 == 0 {
            run.agent.sync_target();
        }
    }
    Ok(run.agent.q)
}
