//! Gradient episodic memory.
//!
//! Each step compares the current gradient `g` with the mean gradient `g_t`
//! of every earlier task's memory segment. If some `g . g_t < 0`, `g` is
//! replaced by `g~ = g + sum_t v_t g_t`, where `v` solves the dual QP
//!
//! ```text
//! min_v  1/2 v' (P + eps I) v + c' v   s.t.  v >= margin,
//! P_ts = g_t . g_s,   c_t = g_t . g
//! ```
//!
//! The dual is solved by projected gradient followed by an active-set
//! refinement that lands on the exact optimum.
//!
//! Memory gradients are handled in one of two ways. The dense route builds
//! every `g_t` as a full vector. The factored route never materializes them:
//! a per-example gradient of an MLP is a sum of outer products, so
//! `grad(e) . grad(f) = sum_l (delta_e,l . delta_f,l) * (in_e,l . in_f,l + 1)`.
//! Many small segments (Many Permutations) favor the factored route; few
//! large ones favor the dense route.

use alloc::vec;
use alloc::vec::Vec;

use super::replay_steps::accumulate_example;
use super::Learner;
use crate::error::Result;
use crate::nn::{dot, layer_update, NetworkSpec, Workspace};
use crate::replay::TaskRingBuffer;
use crate::streams::Example;

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub v: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Dense Cholesky solve of `a x = b`; `None` if `a` is not numerically positive definite.
fn cholesky_solve(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 1e-13 * max_diag.max(f64::MIN_POSITIVE) {
                    return None;
                }
                l[i * n + i] = libm::sqrt(sum);
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

fn matvec(q: &[f64], n: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    (0..n).map(|i| dot(&q[i * n..(i + 1) * n], w) + b[i]).collect()
}

/// Largest violation of the KKT conditions of `min 1/2 w'Qw + b'w, w >= 0`.
fn kkt_residual(w: &[f64], grad: &[f64]) -> f64 {
    w.iter().zip(grad).map(|(&wi, &gi)| libm::fabs(wi.min(gi))).fold(0.0, f64::max)
}

/// Solves the GEM dual for a row-major `n x n` Gram matrix and `c = M g`.
pub fn solve_gem_dual(gram: &[f64], c: &[f64], margin: f64, eps: f64, max_iters: usize) -> DualSolution {
    let n = c.len();
    assert_eq!(gram.len(), n * n, "gram must be n x n");
    if n == 0 {
        return DualSolution { v: Vec::new(), iterations: 0, converged: true };
    }
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] = 0.5 * (gram[i * n + j] + gram[j * n + i]);
        }
        q[i * n + i] += eps;
    }
    // Shift v = w + margin so the constraint becomes w >= 0.
    let shift = vec![margin; n];
    let b = matvec(&q, n, &shift, c);
    let tol = 1e-10 * (1.0 + b.iter().map(|x| x.abs()).fold(0.0, f64::max));

    // Gershgorin bound on the largest eigenvalue of Q.
    let lipschitz = (0..n).map(|i| q[i * n..(i + 1) * n].iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut w = vec![0.0; n];
    let mut iterations = 0;
    if lipschitz > 0.0 {
        for _ in 0..max_iters {
            iterations += 1;
            let grad = matvec(&q, n, &w, &b);
            if kkt_residual(&w, &grad) <= tol {
                break;
            }
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi = (*wi - gi / lipschitz).max(0.0);
            }
        }
    }

    // Active-set refinement from the projected-gradient point.
    let mut free: Vec<bool> = w.iter().map(|&x| x > 0.0).collect();
    for _ in 0..(4 * n + 20) {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let z_free = if idx.is_empty() {
            Some(Vec::new())
        } else {
            let m = idx.len();
            let mut sub = vec![0.0; m * m];
            for (a, &i) in idx.iter().enumerate() {
                for (bb, &j) in idx.iter().enumerate() {
                    sub[a * m + bb] = q[i * n + j];
                }
            }
            let rhs: Vec<f64> = idx.iter().map(|&i| -b[i]).collect();
            cholesky_solve(&sub, m, &rhs)
        };
        let Some(z_free) = z_free else { break };
        if z_free.iter().all(|&z| z >= 0.0) {
            w.iter_mut().for_each(|x| *x = 0.0);
            for (&i, &z) in idx.iter().zip(&z_free) {
                w[i] = z;
            }
            let grad = matvec(&q, n, &w, &b);
            let entering = (0..n).filter(|&i| !free[i] && grad[i] < -tol).min_by(|&i, &j| grad[i].total_cmp(&grad[j]));
            match entering {
                Some(i) => free[i] = true,
                None => break,
            }
        } else {
            // Move toward the subspace optimum until a free variable hits zero.
            let mut step = 1.0;
            let mut blocking = None;
            for (&i, &z) in idx.iter().zip(&z_free) {
                if z < 0.0 {
                    let t = w[i] / (w[i] - z);
                    if t < step {
                        step = t;
                        blocking = Some(i);
                    }
                }
            }
            for (&i, &z) in idx.iter().zip(&z_free) {
                w[i] += step * (z - w[i]);
                if w[i] < 0.0 {
                    w[i] = 0.0;
                }
            }
            if let Some(i) = blocking {
                w[i] = 0.0;
                free[i] = false;
            }
        }
    }
    let grad = matvec(&q, n, &w, &b);
    let wmax = w.iter().copied().fold(0.0, f64::max);
    let converged = kkt_residual(&w, &grad) <= tol + 1e-10 * lipschitz * wmax;
    DualSolution { v: w.iter().map(|x| x + margin).collect(), iterations, converged }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GemProjection {
    /// `g + M' v`, or `g` itself when the solver did not converge.
    pub grad: Vec<f64>,
    pub v: Vec<f64>,
    pub converged: bool,
}

/// Projects `g` against the constraint gradients `memories` (dense route).
pub fn gem_project(g: &[f64], memories: &[&[f64]], margin: f64, eps: f64, max_iters: usize) -> GemProjection {
    let n = memories.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let d = dot(memories[i], memories[j]);
            gram[i * n + j] = d;
            gram[j * n + i] = d;
        }
    }
    let c: Vec<f64> = memories.iter().map(|m| dot(m, g)).collect();
    let sol = solve_gem_dual(&gram, &c, margin, eps, max_iters);
    let mut grad = g.to_vec();
    if sol.converged {
        for (m, &v) in memories.iter().zip(&sol.v) {
            for (o, &x) in grad.iter_mut().zip(m.iter()) {
                *o += v * x;
            }
        }
    }
    GemProjection { grad, v: sol.v, converged: sol.converged }
}

/// How memory gradients are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GemRoute {
    /// Pick whichever of the two is cheaper for the current memory layout.
    #[default]
    Auto,
    Dense,
    Factored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GemStats {
    /// Steps with at least one earlier task in memory.
    pub checks: u64,
    /// Steps where some constraint was violated.
    pub violations: u64,
    /// Violations resolved by applying the projected gradient.
    pub projections: u64,
    /// Violations where the solver failed and the raw gradient was applied.
    pub fallbacks: u64,
}

/// Activations and deltas of one memory example, laid out layer by layer.
#[derive(Debug, Clone, Default)]
struct Factors {
    acts: Vec<f64>,
    deltas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GemState {
    ring: TaskRingBuffer,
    stats: GemStats,
    route: GemRoute,
    ws: Option<Workspace>,
    dense: Vec<Vec<f64>>,
    factors: Vec<Factors>,
    input_gram: Vec<f64>,
    input_gram_key: Option<(usize, usize, u64)>,
    generation: u64,
    newest_task: usize,
}

impl GemState {
    pub fn new(ring: TaskRingBuffer) -> Self {
        Self {
            ring,
            stats: GemStats::default(),
            route: GemRoute::Auto,
            ws: None,
            dense: Vec::new(),
            factors: Vec::new(),
            input_gram: Vec::new(),
            input_gram_key: None,
            generation: 0,
            newest_task: 0,
        }
    }

    pub fn memory(&self) -> &TaskRingBuffer {
        &self.ring
    }

    pub fn stats(&self) -> GemStats {
        self.stats
    }

    fn store(&mut self, example: &Example) -> Result<()> {
        if example.task_id < self.newest_task {
            // An earlier segment changed; cached input products are stale.
            self.generation += 1;
        }
        self.newest_task = self.newest_task.max(example.task_id);
        self.ring.update(example.clone())
    }
}

/// Offsets of each layer's input and delta inside [`Factors`].
struct Layout {
    /// (act offset, act len) of the input to layer `l`, for `l >= 1`.
    acts: Vec<(usize, usize)>,
    /// (delta offset, delta len) of layer `l`.
    deltas: Vec<(usize, usize)>,
}

impl Layout {
    fn new(spec: &NetworkSpec) -> Self {
        let mut acts = vec![(0, 0)];
        let mut deltas = Vec::new();
        let (mut ao, mut d) = (0, 0);
        for l in 0..spec.depth() {
            let fo = spec.layer(0, l).fan_out;
            deltas.push((d, fo));
            d += fo;
            if l + 1 < spec.depth() {
                acts.push((ao, fo));
                ao += fo;
            }
        }
        Self { acts, deltas }
    }

    fn capture(&self, ws: &Workspace, out: &mut Factors) {
        out.acts.clear();
        out.deltas.clear();
        for l in 0..self.deltas.len() {
            out.deltas.extend_from_slice(ws.delta(l));
            if l + 1 < self.deltas.len() {
                out.acts.extend_from_slice(ws.activation(l));
            }
        }
    }

    /// Gradient inner product of two examples given their input dot product.
    fn kernel(&self, a: &Factors, b: &Factors, input_dot: f64) -> f64 {
        let mut total = 0.0;
        for (l, &(doff, dlen)) in self.deltas.iter().enumerate() {
            let dd = dot(&a.deltas[doff..doff + dlen], &b.deltas[doff..doff + dlen]);
            if dd == 0.0 {
                continue;
            }
            let ii = if l == 0 {
                input_dot
            } else {
                let (aoff, alen) = self.acts[l];
                dot(&a.acts[aoff..aoff + alen], &b.acts[aoff..aoff + alen])
            };
            total += dd * (ii + 1.0);
        }
        total
    }
}

fn input_dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

impl Learner {
    /// Forces the dense or factored memory-gradient route (tests, profiling).
    pub fn set_gem_route(&mut self, route: GemRoute) {
        if let Some(gem) = self.gem.as_mut() {
            gem.route = route;
        }
    }

    pub(super) fn step_gem(&mut self, example: &Example) -> Result<f64> {
        let spec = alloc::sync::Arc::clone(&self.spec);
        let head = spec.head_for_task(example.task_id)?;
        let alpha = self.config.alpha;
        let (margin, eps, iters) = (self.config.gem_memory_strength, self.config.gem_eps, self.config.gem_max_iters);
        let gem = self.gem.as_mut().expect("GEM state exists for the gem algorithm");

        self.ws.forward(&spec, self.params.values(), &example.x, head);
        let loss = self.ws.cross_entropy(example.y);
        self.ws.backward(&spec, self.params.values());

        let past: Vec<usize> = (0..example.task_id.min(gem.ring.task_count()))
            .filter(|&t| !gem.ring.segment(t).is_empty())
            .collect();
        if past.is_empty() {
            self.ws.apply_sgd(&spec, &example.x, alpha, self.params.values_mut());
            gem.store(example)?;
            return Ok(loss);
        }
        gem.stats.checks += 1;
        let n_mem: usize = past.iter().map(|&t| gem.ring.segment(t).len()).sum();
        let p = spec.param_count() as f64;
        let width: usize = (0..spec.depth()).map(|l| spec.layer(0, l).fan_out).sum::<usize>()
            + (1..spec.depth()).map(|l| spec.layer(0, l).fan_in).sum::<usize>();
        let dense_cost = n_mem as f64 * p + (past.len() * past.len()) as f64 * p / 2.0;
        let factored_cost = (n_mem * n_mem) as f64 * width as f64 / 2.0;
        let factored = match gem.route {
            GemRoute::Dense => false,
            GemRoute::Factored => true,
            GemRoute::Auto => factored_cost < dense_cost,
        };
        let mut ws2 = gem.ws.take().unwrap_or_else(|| Workspace::new(&spec));
        let params = self.params.values_mut();

        if !factored {
            self.grad.iter_mut().for_each(|g| *g = 0.0);
            self.ws.accumulate_grad(&spec, &example.x, 1.0, &mut self.grad);
            gem.dense.resize_with(past.len(), Vec::new);
            let mut violated = false;
            for (slot, &t) in past.iter().enumerate() {
                let buf = &mut gem.dense[slot];
                buf.clear();
                buf.resize(spec.param_count(), 0.0);
                let seg = gem.ring.segment(t);
                let scale = 1.0 / seg.len() as f64;
                for m in seg {
                    accumulate_example(&mut ws2, &spec, params, m, scale, buf);
                }
                violated |= dot(&self.grad, buf) < 0.0;
            }
            if violated {
                gem.stats.violations += 1;
                let mems: Vec<&[f64]> = gem.dense[..past.len()].iter().map(|v| v.as_slice()).collect();
                let proj = gem_project(&self.grad, &mems, margin, eps, iters);
                if proj.converged {
                    gem.stats.projections += 1;
                    for (p, g) in params.iter_mut().zip(&proj.grad) {
                        *p -= alpha * g;
                    }
                } else {
                    gem.stats.fallbacks += 1;
                    self.ws.apply_sgd(&spec, &example.x, alpha, params);
                }
            } else {
                self.ws.apply_sgd(&spec, &example.x, alpha, params);
            }
        } else {
            let layout = Layout::new(&spec);
            let mut current = Factors::default();
            layout.capture(&self.ws, &mut current);
            let members: Vec<(usize, &Example)> =
                past.iter().enumerate().flat_map(|(slot, &t)| gem.ring.segment(t).iter().map(move |m| (slot, m))).collect();
            gem.factors.resize_with(members.len(), Factors::default);
            let mut c = vec![0.0; past.len()];
            for (i, &(slot, m)) in members.iter().enumerate() {
                let mh = spec.head_for_task(m.task_id)?;
                ws2.forward(&spec, params, &m.x, mh);
                ws2.cross_entropy(m.y);
                ws2.backward(&spec, params);
                layout.capture(&ws2, &mut gem.factors[i]);
                let n = gem.ring.segment(past[slot]).len() as f64;
                c[slot] += layout.kernel(&current, &gem.factors[i], input_dot(&example.x, &m.x)) / n;
            }
            if c.iter().any(|&x| x < 0.0) {
                gem.stats.violations += 1;
                let key = (example.task_id, members.len(), gem.generation);
                if gem.input_gram_key != Some(key) {
                    let nm = members.len();
                    gem.input_gram.clear();
                    gem.input_gram.resize(nm * nm, 0.0);
                    for i in 0..nm {
                        for j in i..nm {
                            let d = input_dot(&members[i].1.x, &members[j].1.x);
                            gem.input_gram[i * nm + j] = d;
                            gem.input_gram[j * nm + i] = d;
                        }
                    }
                    gem.input_gram_key = Some(key);
                }
                let (nt, nm) = (past.len(), members.len());
                let sizes: Vec<f64> = past.iter().map(|&t| gem.ring.segment(t).len() as f64).collect();
                let mut gram = vec![0.0; nt * nt];
                for i in 0..nm {
                    for j in i..nm {
                        let k = layout.kernel(&gem.factors[i], &gem.factors[j], gem.input_gram[i * nm + j]);
                        let (si, sj) = (members[i].0, members[j].0);
                        let w = k / (sizes[si] * sizes[sj]);
                        gram[si * nt + sj] += w;
                        if i != j {
                            gram[sj * nt + si] += w;
                        }
                    }
                }
                let sol = solve_gem_dual(&gram, &c, margin, eps, iters);
                self.ws.apply_sgd(&spec, &example.x, alpha, params);
                if sol.converged {
                    gem.stats.projections += 1;
                    for (i, &(slot, m)) in members.iter().enumerate() {
                        let rate = alpha * sol.v[slot] / sizes[slot];
                        if rate == 0.0 {
                            continue;
                        }
                        let f = &gem.factors[i];
                        let mh = spec.head_for_task(m.task_id)?;
                        for l in 0..spec.depth() {
                            let (doff, dlen) = layout.deltas[l];
                            let delta = &f.deltas[doff..doff + dlen];
                            if l == 0 {
                                layer_update(params, spec.layer(mh, 0), &m.x, delta, rate);
                            } else {
                                let (aoff, alen) = layout.acts[l];
                                layer_update(params, spec.layer(mh, l), &f.acts[aoff..aoff + alen], delta, rate);
                            }
                        }
                    }
                } else {
                    gem.stats.fallbacks += 1;
                }
            } else {
                self.ws.apply_sgd(&spec, &example.x, alpha, params);
            }
        }
        gem.ws = Some(ws2);
        gem.store(example)?;
        Ok(loss)
    }
}
