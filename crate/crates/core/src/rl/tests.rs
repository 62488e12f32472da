use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::*;
use crate::nn::{init_params, NetworkSpec, ParamVector, Workspace};
use crate::replay::ReservoirBuffer;
use crate::rng::rng_from_seed;

fn exact_config() -> CatcherConfig {
    // Binary fractions keep the hand trace exact.
    CatcherConfig { paddle_speed: 0.25, catch_radius: 0.125, lives: 3, base_velocity: 0.125, velocity_delta: 0.5 }
}

fn state(paddle_x: f64, pellet_x: f64) -> CatcherState {
    CatcherState { paddle_x, pellet_x, pellet_y: 0.0, pellet_velocity: 0.125, lives: 3 }
}

#[test]
fn paddle_is_clamped() {
    let c = exact_config();
    let mut rng = rng_from_seed(0);
    assert_eq!(env_step(&state(0.0, 0.5), Action::Left, &c, &mut rng).state.paddle_x, 0.0);
    assert_eq!(env_step(&state(1.0, 0.5), Action::Right, &c, &mut rng).state.paddle_x, 1.0);
    assert_eq!(env_step(&state(0.5, 0.5), Action::Stay, &c, &mut rng).state.paddle_x, 0.5);
}

#[test]
fn landing_rules() {
    let c = exact_config();
    let mut rng = rng_from_seed(1);
    let mut s = state(0.5, 0.625);
    s.pellet_y = 0.875;
    let caught = env_step(&s, Action::Stay, &c, &mut rng);
    assert_eq!((caught.reward, caught.state.lives, caught.done), (1.0, 3, false));
    assert_eq!(caught.state.pellet_y, 0.0);
    s.pellet_x = 0.75;
    let missed = env_step(&s, Action::Stay, &c, &mut rng);
    assert_eq!((missed.reward, missed.state.lives), (-1.0, 2));
    s.lives = 1;
    assert!(env_step(&s, Action::Stay, &c, &mut rng).done);
    assert_eq!(c.velocity(2), 0.25);
}

#[test]
fn scripted_episode_matches_hand_trace() {
    let c = exact_config();
    let seed = 42;
    // Respawn positions the environment will draw.
    let mut draws = rng_from_seed(seed);
    let respawn: Vec<f64> = (0..4).map(|_| draws.random::<f64>()).collect();

    let mut rng = rng_from_seed(seed);
    let mut s = state(0.5, 0.75);
    let script = [Action::Right, Action::Right, Action::Right, Action::Left, Action::Left, Action::Stay, Action::Stay, Action::Stay];
    let mut trace = Vec::new();
    for i in 0..30 {
        let a = if i < script.len() { script[i] } else { Action::Stay };
        let out = env_step(&s, a, &c, &mut rng);
        trace.push((out.state.paddle_x, out.state.pellet_y, out.reward, out.state.lives));
        s = out.state;
        if out.done {
            break;
        }
    }

    // Frames 1-8 by hand: paddle 0.75, 1.0, 1.0, 0.75, 0.5, then stays; the
    // pellet lands on frame 8 at x = 0.75, 0.25 away from the paddle: a miss.
    let paddle = [0.75, 1.0, 1.0, 0.75, 0.5, 0.5, 0.5, 0.5];
    for (i, &p) in paddle.iter().enumerate() {
        let y = if i == 7 { 0.0 } else { 0.125 * (i + 1) as f64 };
        let (r, lives) = if i == 7 { (-1.0, 2) } else { (0.0, 3) };
        assert_eq!(trace[i], (p, y, r, lives), "frame {}", i + 1);
    }
    // Frames 9-30: the paddle idles at 0.5 and pellets land on frames 16 and 24.
    let mut lives = 2;
    for (n, frame) in [16usize, 24].into_iter().enumerate() {
        let hit = (0.5 - respawn[n]).abs() <= 0.125;
        if !hit {
            lives -= 1;
        }
        assert_eq!(trace[frame - 1].2, if hit { 1.0 } else { -1.0 });
        assert_eq!(trace[frame - 1].3, lives);
        if lives == 0 {
            assert_eq!(trace.len(), frame);
            return;
        }
    }
    assert_eq!(trace.len(), 30);
    for (i, t) in trace.iter().enumerate().skip(8) {
        assert_eq!(t.0, 0.5);
        let frame = i + 1;
        if frame != 16 && frame != 24 {
            assert_eq!(t.2, 0.0, "frame {frame}");
            assert_eq!(t.1, 0.125 * ((frame - 8) % 8) as f64);
        }
    }
}

#[test]
fn environment_is_deterministic() {
    let play = |seed| {
        let mut env = CatcherLite::new(CatcherConfig::default(), 2, rng_from_seed(seed));
        let mut act = rng_from_seed(99);
        (0..500).map(|_| env.step(Action::from_index(act.random_range(0..3)).unwrap()).state).collect::<Vec<_>>()
    };
    assert_eq!(play(3), play(3));
    assert_ne!(play(3), play(4));
}

#[test]
fn pellet_falls_monotonically_within_a_drop() {
    let mut env = CatcherLite::new(CatcherConfig::default(), 5, rng_from_seed(5));
    let mut y = env.state().pellet_y;
    for _ in 0..300 {
        let out = env.step(Action::Stay);
        if out.reward == 0.0 {
            assert!(out.state.pellet_y > y);
        } else {
            assert_eq!(out.state.pellet_y, 0.0);
        }
        y = out.state.pellet_y;
        if out.done {
            env.reset();
            y = 0.0;
        }
    }
}

fn linear_q() -> ParamVector {
    // Q(s) = W^T s + b with w[i][a] at i * 3 + a.
    let spec = Arc::new(NetworkSpec::new(FEATURES, &[], ACTIONS).unwrap());
    let w = [1.0, 0.0, -1.0, 0.5, 2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let mut values = w.to_vec();
    values.extend_from_slice(&[0.1, -0.2, 0.3]);
    ParamVector::from_values(&spec, values).unwrap()
}

fn transition(s_next: [f32; 4], r: f64, done: bool) -> Transition {
    Transition { s: [0.5, 0.5, 0.5, 0.05], a: 1, r, s_next, done }
}

#[test]
fn dqn_target_table() {
    let q = linear_q();
    let mut ws = Workspace::new(q.spec());
    // s' = (1, 0.5, 0.25, 0): Q = (1 + 0.25 + 0.1, 1 - 0.2, -1 + 0.25 + 0.3) = (1.35, 0.8, -0.45).
    let t = transition([1.0, 0.5, 0.25, 0.0], 0.5, false);
    assert!((dqn_target(&t, &q, 0.9, &mut ws) - (0.5 + 0.9 * 1.35)).abs() < 1e-12);
    // s' = (0, 1, 0, 0): Q = (0.6, 1.8, 0.3).
    let t = transition([0.0, 1.0, 0.0, 0.0], -1.0, false);
    assert!((dqn_target(&t, &q, 0.5, &mut ws) - (-1.0 + 0.5 * 1.8)).abs() < 1e-12);
    assert_eq!(dqn_target(&transition([0.0, 1.0, 0.0, 0.0], 1.0, true), &q, 0.9, &mut ws), 1.0);
    assert_eq!(dqn_target(&t, &q, 0.0, &mut ws), -1.0);
}

#[test]
fn huber_pieces() {
    assert_eq!(huber(0.5), 0.125);
    assert_eq!(huber(-3.0), 2.5);
    assert_eq!(huber_grad(0.25), 0.25);
    assert_eq!(huber_grad(-4.0), -1.0);
    assert_eq!(huber(1.0), 0.5);
}

#[test]
fn q_gradient_matches_finite_differences() {
    let spec = Arc::new(NetworkSpec::new(FEATURES, &[6, 5], ACTIONS).unwrap());
    let params = init_params(&spec, 8);
    let mut rng = rng_from_seed(8);
    for (a, y) in [(0, 0.3), (1, 5.0), (2, -4.0)] {
        let s: [f32; 4] = core::array::from_fn(|_| rng.random::<f32>());
        let t = Transition { s, a, r: 0.0, s_next: s, done: true };
        let g = q_loss_and_grad(&params, &t, y).grad;
        let mut probe = params.clone();
        for i in 0..params.len() {
            let o = probe.values()[i];
            probe.values_mut()[i] = o + 1e-5;
            let up = q_loss_and_grad(&probe, &t, y).loss;
            probe.values_mut()[i] = o - 1e-5;
            let down = q_loss_and_grad(&probe, &t, y).loss;
            probe.values_mut()[i] = o;
            let num = (up - down) / 2e-5;
            let an = g.values()[i];
            assert!((an - num).abs() / an.abs().max(num.abs()).max(1e-4) < 1e-6, "coord {i}: {an} vs {num}");
        }
    }
}

fn random_log(n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| Transition {
            s: core::array::from_fn(|_| rng.random::<f32>()),
            a: rng.random_range(0..ACTIONS),
            r: [-1.0, 0.0, 0.0, 0.0, 1.0][rng.random_range(0..5)],
            s_next: core::array::from_fn(|_| rng.random::<f32>()),
            done: rng.random_bool(0.05),
        })
        .collect()
}

fn small_dqn() -> DqnConfig {
    DqnConfig { hidden: vec![16, 16], buffer_capacity: 200, ..DqnConfig::default() }
}

#[test]
fn mer_with_unit_rates_equals_er_on_shared_log() {
    let log = random_log(1000, 1);
    let c = DqnConfig { beta: 1.0, gamma_meta: 1.0, steps: 1, k: 1, ..small_dqn() };
    let mer = replay_log(&c, DqnVariant::Mer, &log).unwrap();
    let er = replay_log(&c, DqnVariant::Er, &log).unwrap();
    let diff = mer.values().iter().zip(er.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-10, "{diff}");
    let start = init_params(mer.spec(), crate::rng::SeedStreams::new(c.seed).seed(crate::rng::SeedSource::Init));
    assert_ne!(&mer, &start);

    // Larger batches separate the two rules.
    let c = DqnConfig { k: 5, ..c };
    assert_ne!(replay_log(&c, DqnVariant::Mer, &log).unwrap(), replay_log(&c, DqnVariant::Er, &log).unwrap());
}

#[test]
fn mer_with_zero_gamma_does_not_learn() {
    let log = random_log(100, 2);
    let c = DqnConfig { gamma_meta: 0.0, ..small_dqn() };
    let p = replay_log(&c, DqnVariant::Mer, &log).unwrap();
    let start = init_params(p.spec(), crate::rng::SeedStreams::new(c.seed).seed(crate::rng::SeedSource::Init));
    assert_eq!(p, start);
}

#[test]
fn full_runs_agree_when_mer_collapses_to_er() {
    let c = DqnConfig { beta: 1.0, gamma_meta: 1.0, steps: 1, k: 1, task_count: 2, frames_per_task: 1500, eval_interval: 500, ..small_dqn() };
    let mer = train_dqn(&c, DqnVariant::Mer).unwrap();
    let er = train_dqn(&c, DqnVariant::Er).unwrap();
    assert_eq!(mer.scores, er.scores);
    assert_eq!(mer.params, er.params);
}

#[test]
fn random_policy_gives_finite_scores() {
    let c = DqnConfig {
        epsilon_start: 1.0,
        epsilon_end: 1.0,
        task_count: 2,
        frames_per_task: 1000,
        eval_interval: 500,
        ..small_dqn()
    };
    let out = train_dqn(&c, DqnVariant::Mer).unwrap();
    assert_eq!(out.frames, 2000);
    assert!(out.scores.iter().all(|r| r.mean_score.is_finite() && r.mean_score >= 0.0));
    // Task 0 at every checkpoint, task 1 once it has been seen.
    let frames: Vec<(u64, usize)> = out.scores.iter().map(|r| (r.frame, r.task_evaluated)).collect();
    assert_eq!(frames, vec![(500, 0), (1000, 0), (1500, 0), (1500, 1), (2000, 0), (2000, 1)]);
}

#[test]
fn epsilon_schedule_and_validation() {
    let c = DqnConfig::default();
    assert_eq!(c.epsilon(0), 1.0);
    assert!((c.epsilon(2500) - 0.525).abs() < 1e-12);
    assert_eq!(c.epsilon(1_000_000), 0.05);
    assert!(DqnConfig { discount: 1.0, ..c.clone() }.validate().is_err());
    assert!(DqnConfig { epsilon_end: 1.5, ..c.clone() }.validate().is_err());
    assert!(DqnConfig { k: 0, ..c }.validate().is_err());
}

#[test]
fn transition_reservoir_is_uniform() {
    // Fill-then-replace counts over many runs: every index equally likely to stay.
    let (m, n, runs) = (10usize, 100usize, 4000usize);
    let mut counts = vec![0u32; n];
    let mut rng = rng_from_seed(3);
    for _ in 0..runs {
        let mut buf = ReservoirBuffer::new(m);
        for i in 0..n {
            buf.update(i, &mut rng);
        }
        buf.items().iter().for_each(|&i| counts[i] += 1);
    }
    let p = m as f64 / n as f64;
    let sd = (runs as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - runs as f64 * p).abs() < 4.5 * sd);
    }
}

#[test]
fn single_task_is_learnable() {
    for variant in [DqnVariant::Er, DqnVariant::Mer] {
        let c = DqnConfig { task_count: 1, frames_per_task: 30_000, eval_interval: 30_000, ..DqnConfig::default() };
        let mut run = DqnRun::new(c, variant).unwrap();
        while !run.is_finished() {
            run.advance().unwrap();
        }
        let rate = run.greedy_catch_rate(0);
        assert!(rate > 0.9, "{}: catch rate {rate}", variant.name());
    }
}
