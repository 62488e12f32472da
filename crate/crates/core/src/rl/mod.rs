//! Continual reinforcement learning at desk scale: a low-dimensional Catcher
//! game whose pellets fall faster with every task, and DQN trained with either
//! plain experience replay or MER.

mod dqn;

pub use dqn::{
    dqn_target, huber, huber_grad, q_loss_and_grad, replay_log, train_dqn, DqnConfig, DqnOutcome, DqnRun, DqnVariant, Retention,
    ScoreRecord,
    Transition,
};

use rand::Rng as _;

use crate::rng::Rng;

pub const FEATURES: usize = 4;
pub const ACTIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Left = 0,
    Stay = 1,
    Right = 2,
}

impl Action {
    pub const ALL: [Action; ACTIONS] = [Action::Left, Action::Stay, Action::Right];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Game constants on a unit screen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatcherConfig {
    pub paddle_speed: f64,
    pub catch_radius: f64,
    pub lives: u32,
    /// Pellet descent per frame in task 0.
    pub base_velocity: f64,
    /// Relative velocity increase per task.
    pub velocity_delta: f64,
}

impl Default for CatcherConfig {
    fn default() -> Self {
        Self { paddle_speed: 0.1, catch_radius: 0.1, lives: 3, base_velocity: 0.05, velocity_delta: 0.3 }
    }
}

impl CatcherConfig {
    /// `v0 * (1 + t * delta)`.
    pub fn velocity(&self, task: usize) -> f64 {
        self.base_velocity * (1.0 + task as f64 * self.velocity_delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatcherState {
    pub paddle_x: f64,
    pub pellet_x: f64,
    pub pellet_y: f64,
    pub pellet_velocity: f64,
    pub lives: u32,
}

impl CatcherState {
    pub fn features(&self) -> [f32; FEATURES] {
        [self.paddle_x as f32, self.pellet_x as f32, self.pellet_y as f32, self.pellet_velocity as f32]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    pub state: CatcherState,
    pub reward: f64,
    pub done: bool,
}

/// One frame: move the paddle, drop the pellet, score a landing.
///
/// A landed pellet respawns at the top at a uniform `x` drawn from `rng`.
pub fn env_step(state: &CatcherState, action: Action, config: &CatcherConfig, rng: &mut Rng) -> EnvStep {
    let mut next = *state;
    let shift = match action {
        Action::Left => -config.paddle_speed,
        Action::Stay => 0.0,
        Action::Right => config.paddle_speed,
    };
    next.paddle_x = (state.paddle_x + shift).clamp(0.0, 1.0);
    next.pellet_y = state.pellet_y + state.pellet_velocity;
    let mut reward = 0.0;
    if next.pellet_y >= 1.0 {
        if (next.paddle_x - next.pellet_x).abs() <= config.catch_radius {
            reward = 1.0;
        } else {
            reward = -1.0;
            next.lives = next.lives.saturating_sub(1);
        }
        next.pellet_x = rng.random::<f64>();
        next.pellet_y = 0.0;
    }
    EnvStep { state: next, reward, done: next.lives == 0 }
}

/// Stateful wrapper with its own respawn generator.
#[derive(Debug, Clone)]
pub struct CatcherLite {
    config: CatcherConfig,
    velocity: f64,
    state: CatcherState,
    rng: Rng,
}

impl CatcherLite {
    pub fn new(config: CatcherConfig, task: usize, rng: Rng) -> Self {
        let velocity = config.velocity(task);
        let state =
            CatcherState { paddle_x: 0.5, pellet_x: 0.5, pellet_y: 0.0, pellet_velocity: velocity, lives: config.lives };
        let mut env = Self { config, velocity, state, rng };
        env.reset();
        env
    }

    /// Starts a new game: paddle centred, full lives, fresh pellet.
    pub fn reset(&mut self) -> CatcherState {
        self.state = CatcherState {
            paddle_x: 0.5,
            pellet_x: self.rng.random::<f64>(),
            pellet_y: 0.0,
            pellet_velocity: self.velocity,
            lives: self.config.lives,
        };
        self.state
    }

    /// Switches the pellet velocity to that of `task`; takes effect at the next reset.
    pub fn set_task(&mut self, task: usize) {
        self.velocity = self.config.velocity(task);
    }

    pub fn state(&self) -> &CatcherState {
        &self.state
    }

    pub fn config(&self) -> &CatcherConfig {
        &self.config
    }

    pub fn step(&mut self, action: Action) -> EnvStep {
        let out = env_step(&self.state, action, &self.config, &mut self.rng);
        self.state = out.state;
        out
    }
}

#[cfg(test)]
mod tests;
