//! Path-integral Monte Carlo controller.
//!
//! One planning invocation samples `N` rollouts of the noisy double
//! integrator around an importance-control sequence, scores each path with
//! the cost functional, turns scores into normalized exponential weights and
//! adds the weighted mean of the stored noise increments (divided by `dt`)
//! onto the controls:
//!
//! ```text
//! u*_s = u_s + (1/dt) Σ_k w_k Δξ_{k,s}
//! ```
//!
//! Rollouts that enter a hard-violation state are killed at that step and
//! carry exactly zero weight. Weight exponents are max-shifted for numerical
//! stability, and they include the importance-control cross term
//! `Σ_s u_sᵀ R Δξ_s` alongside the path cost: sampling under a non-zero
//! control sequence tilts the path density, and without the cross term the
//! weighted update is biased away from the optimum for any warm start other
//! than zeros (for a linear-quadratic instance the one-step update would
//! overshoot the optimal control by roughly a factor of two). With it, the
//! update is warm-start independent up to Monte Carlo error.
//!
//! Receding-horizon use: [`mpc_step`] runs the pipeline once, hands back the
//! next velocity command per agent, and shifts the updated sequence for
//! reuse at the next replan. Rollout evaluation is embarrassingly parallel;
//! per-rollout RNG substreams keep results bit-identical for any worker
//! count.

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{ControlCostSpec, CostModel};
use crate::dynamics::{step_agent, JointState};
use crate::rng::{domain, substream};
use crate::{Error, Result};

/// Sampler configuration; fields match the scenario-file keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiConfig {
    pub n_samples: usize,
    pub horizon_s: f64,
    pub dt_s: f64,
    pub lambda: f64,
    pub sigma_u: f64,
    pub replan_hz: f64,
}

impl PiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("pi.n_samples", "must be >= 1"));
        }
        if !(self.dt_s > 0.0) || !self.dt_s.is_finite() {
            return Err(Error::invalid("pi.dt_s", "must be finite and > 0"));
        }
        if !(self.horizon_s >= self.dt_s) {
            return Err(Error::invalid("pi.horizon_s", "must be >= dt_s"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("pi.lambda", "must be finite and > 0"));
        }
        if !(self.sigma_u >= 0.0) || !self.sigma_u.is_finite() {
            return Err(Error::invalid("pi.sigma_u", "must be finite and >= 0"));
        }
        if !(self.replan_hz > 0.0) || !self.replan_hz.is_finite() {
            return Err(Error::invalid("pi.replan_hz", "must be finite and > 0"));
        }
        if self.replan_period() < self.dt_s * (1.0 - 1e-9) {
            return Err(Error::invalid(
                "pi.replan_hz",
                "replan period must be >= planner dt_s",
            ));
        }
        Ok(())
    }

    /// Horizon length in planner steps.
    pub fn steps(&self) -> usize {
        ((self.horizon_s / self.dt_s).round() as usize).max(1)
    }

    pub fn replan_period(&self) -> f64 {
        1.0 / self.replan_hz
    }

    /// How many horizon steps one replan period covers.
    pub fn shift_steps(&self) -> usize {
        ((self.replan_period() / self.dt_s).round() as usize).clamp(1, self.steps())
    }

    pub fn control_cost(&self) -> Result<ControlCostSpec> {
        ControlCostSpec::new(self.lambda, self.sigma_u)
    }
}

/// Time-indexed per-agent accelerations over a horizon; the importance
/// controls the sampler explores around.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    u: Vec<Vector2<f64>>, // step-major: index s * agents + i
    agents: usize,
}

impl ControlSequence {
    pub fn zeros(steps: usize, agents: usize) -> Self {
        assert!(agents >= 1);
        Self {
            u: vec![Vector2::zeros(); steps * agents],
            agents,
        }
    }

    /// Number of horizon steps.
    pub fn len(&self) -> usize {
        self.u.len() / self.agents
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn step(&self, s: usize) -> &[Vector2<f64>] {
        &self.u[s * self.agents..(s + 1) * self.agents]
    }

    pub fn get(&self, s: usize, agent: usize) -> Vector2<f64> {
        self.u[s * self.agents + agent]
    }

    pub fn set(&mut self, s: usize, agent: usize, value: Vector2<f64>) {
        self.u[s * self.agents + agent] = value;
    }

    /// Iterate per-step control slices in time order.
    pub fn steps(&self) -> impl Iterator<Item = &[Vector2<f64>]> {
        self.u.chunks_exact(self.agents)
    }

    /// Copy of the sub-sequence `[start, start+len)`.
    pub fn slice(&self, start: usize, len: usize) -> ControlSequence {
        ControlSequence {
            u: self.u[start * self.agents..(start + len) * self.agents].to_vec(),
            agents: self.agents,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|v| v.x.is_finite() && v.y.is_finite())
    }
}

/// Drop the first `steps` entries and pad the tail with zeros.
pub fn shift_warm_start(u: &ControlSequence, steps: usize) -> ControlSequence {
    assert!(steps <= u.len(), "shift beyond sequence length");
    let mut out = ControlSequence::zeros(u.len(), u.agents());
    let keep = u.len() - steps;
    for s in 0..keep {
        for i in 0..u.agents() {
            out.set(s, i, u.get(s + steps, i));
        }
    }
    out
}

/// Identifies the RNG substream family of one planning invocation, so that
/// every rollout draws from its own generator derived from
/// `(master, replan counter, rollout index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanSeed {
    pub master: u64,
    pub replan: u64,
}

impl PlanSeed {
    pub fn new(master: u64, replan: u64) -> Self {
        Self { master, replan }
    }

    fn rollout_rng(&self, k: usize) -> rand::rngs::SmallRng {
        substream(self.master, &[domain::ROLLOUT, self.replan, k as u64])
    }
}

/// `N` sampled paths with stored noise realizations, path costs and weights.
///
/// States and noises live in flat step-major buffers; killed rollouts keep
/// their prefix up to the violating state and a `kill_step` marker.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub n: usize,
    pub steps: usize,
    pub agents: usize,
    /// Path costs `S_k` (terminal + running + quadratic control cost);
    /// `+inf` for killed rollouts.
    pub costs: Vec<f64>,
    /// Importance-control cross terms `Σ_s u_sᵀ R Δξ_{k,s}` added to the
    /// weight exponent.
    pub corrections: Vec<f64>,
    /// Normalized weights; zeros until [`compute_weights`] has run.
    pub weights: Vec<f64>,
    pub alive: Vec<bool>,
    /// Step at which the rollout was killed (`steps + 1` when alive).
    pub kill_step: Vec<usize>,
    pub(crate) states: Vec<f64>, // n × (steps+1) × 4·agents
    pub(crate) noises: Vec<f64>, // n × steps × 2·agents
}

impl RolloutBatch {
    fn state_stride(&self) -> usize {
        (self.steps + 1) * 4 * self.agents
    }

    fn noise_stride(&self) -> usize {
        self.steps * 2 * self.agents
    }

    /// Joint state of rollout `k` at step `t` (undefined past `kill_step`).
    pub fn state(&self, k: usize, t: usize) -> JointState {
        let base = k * self.state_stride() + t * 4 * self.agents;
        JointState::from_flat(&self.states[base..base + 4 * self.agents])
    }

    /// Full path of rollout `k`, truncated at the violating state if killed.
    pub fn path(&self, k: usize) -> Vec<JointState> {
        let last = if self.alive[k] {
            self.steps
        } else {
            self.kill_step[k]
        };
        (0..=last).map(|t| self.state(k, t)).collect()
    }

    pub fn noise_increment(&self, k: usize, s: usize, agent: usize) -> Vector2<f64> {
        let base = k * self.noise_stride() + (s * self.agents + agent) * 2;
        Vector2::new(self.noises[base], self.noises[base + 1])
    }

    /// Weight-exponent scores: path cost plus importance cross term.
    pub fn scores(&self) -> Vec<f64> {
        self.costs
            .iter()
            .zip(&self.corrections)
            .map(|(&c, &g)| c + g)
            .collect()
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }
}

/// Sample `N` rollouts from `x0` under the importance controls plus fresh
/// per-rollout noise. Errors with [`Error::NoFeasibleSample`] when every
/// rollout is killed (including an infeasible start).
pub fn sample_rollouts(
    x0: &JointState,
    u: &ControlSequence,
    cfg: &PiConfig,
    cost: &CostModel,
    seed: PlanSeed,
) -> Result<RolloutBatch> {
    cfg.validate()?;
    let m = x0.agent_count();
    let steps = cfg.steps();
    if u.len() != steps {
        return Err(Error::DimensionMismatch {
            what: "importance controls vs horizon",
            expected: steps,
            got: u.len(),
        });
    }
    if u.agents() != m {
        return Err(Error::DimensionMismatch {
            what: "importance controls agents",
            expected: m,
            got: u.agents(),
        });
    }
    if !x0.is_finite() || !u.is_finite() {
        return Err(Error::NonFinite("sample_rollouts inputs"));
    }

    let n = cfg.n_samples;
    let spec = cfg.control_cost()?;
    let noise_std = cfg.sigma_u * cfg.dt_s.sqrt();
    let dt = cfg.dt_s;
    // Control cost is common to every rollout.
    let control_cost: f64 = u.steps().map(|us| spec.quad_control_cost(us) * dt).sum();
    let r = spec.r();

    let state_stride = (steps + 1) * 4 * m;
    let noise_stride = steps * 2 * m;
    let mut states = vec![0.0; n * state_stride];
    let mut noises = vec![0.0; n * noise_stride];

    let x0_flat = x0.to_flat();
    let start_violates = cost.hard_violation(x0);

    struct RolloutResult {
        cost: f64,
        correction: f64,
        alive: bool,
        kill_step: usize,
    }

    let results: Vec<RolloutResult> = states
        .par_chunks_mut(state_stride)
        .zip(noises.par_chunks_mut(noise_stride))
        .enumerate()
        .map(|(k, (sbuf, nbuf))| {
            sbuf[..4 * m].copy_from_slice(&x0_flat);
            if start_violates {
                return RolloutResult {
                    cost: f64::INFINITY,
                    correction: 0.0,
                    alive: false,
                    kill_step: 0,
                };
            }
            let mut rng = seed.rollout_rng(k);
            let mut current = x0.clone();
            let mut running_total = 0.0;
            let mut cross_raw = 0.0; // Σ u·Δξ, scaled by R afterwards
            for s in 0..steps {
                running_total += cost.running(&current) * dt;
                let us = u.step(s);
                for i in 0..m {
                    let nx: f64 = rng.sample(StandardNormal);
                    let ny: f64 = rng.sample(StandardNormal);
                    let d = Vector2::new(nx * noise_std, ny * noise_std);
                    nbuf[(s * m + i) * 2] = d.x;
                    nbuf[(s * m + i) * 2 + 1] = d.y;
                    cross_raw += us[i].dot(&d);
                    *current.agent_mut(i) = step_agent(current.agent(i), us[i], d, dt);
                }
                let base = (s + 1) * 4 * m;
                for (i, a) in current.agents().iter().enumerate() {
                    sbuf[base + 4 * i] = a.p.x;
                    sbuf[base + 4 * i + 1] = a.p.y;
                    sbuf[base + 4 * i + 2] = a.v.x;
                    sbuf[base + 4 * i + 3] = a.v.y;
                }
                if cost.hard_violation(&current) {
                    return RolloutResult {
                        cost: f64::INFINITY,
                        correction: 0.0,
                        alive: false,
                        kill_step: s + 1,
                    };
                }
            }
            let total = running_total + cost.terminal(&current) + control_cost;
            let correction = if cross_raw == 0.0 { 0.0 } else { r * cross_raw };
            RolloutResult {
                cost: total,
                correction,
                alive: true,
                kill_step: steps + 1,
            }
        })
        .collect();

    let batch = RolloutBatch {
        n,
        steps,
        agents: m,
        costs: results.iter().map(|r| r.cost).collect(),
        corrections: results.iter().map(|r| r.correction).collect(),
        weights: vec![0.0; n],
        alive: results.iter().map(|r| r.alive).collect(),
        kill_step: results.iter().map(|r| r.kill_step).collect(),
        states,
        noises,
    };
    if batch.alive_count() == 0 {
        return Err(Error::NoFeasibleSample(n));
    }
    Ok(batch)
}

/// Normalized exponential weights with a max-shift: `w_k ∝ exp(−(s_k −
/// min_alive s)/λ)` for alive rollouts, exactly zero otherwise.
pub fn compute_weights(scores: &[f64], alive: &[bool], lambda: f64) -> Result<Vec<f64>> {
    assert_eq!(scores.len(), alive.len());
    let min = scores
        .iter()
        .zip(alive)
        .filter(|(s, &a)| a && s.is_finite())
        .map(|(s, _)| *s)
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::NoFeasibleSample(scores.len()));
    }
    let mut weights: Vec<f64> = scores
        .iter()
        .zip(alive)
        .map(|(&s, &a)| if a { (-(s - min) / lambda).exp() } else { 0.0 })
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    Ok(weights)
}

/// `ESS = 1/Σ w_k²`, between 1 and the number of rollouts.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Add the weighted noise mean onto the importance controls:
/// `u*_s = u_s + (1/dt) Σ_k w_k Δξ_{k,s}`. Summation runs in fixed rollout
/// order, so results are independent of how rollouts were scheduled.
pub fn update_controls(u: &ControlSequence, batch: &RolloutBatch, dt: f64) -> ControlSequence {
    assert_eq!(u.len(), batch.steps);
    assert_eq!(u.agents(), batch.agents);
    let m = batch.agents;
    let mut acc = vec![Vector2::<f64>::zeros(); batch.steps * m];
    for k in 0..batch.n {
        let w = batch.weights[k];
        if w == 0.0 {
            continue;
        }
        let base = k * batch.noise_stride();
        let nbuf = &batch.noises[base..base + batch.noise_stride()];
        for (slot, d) in acc.iter_mut().zip(nbuf.chunks_exact(2)) {
            slot.x += w * d[0];
            slot.y += w * d[1];
        }
    }
    let mut out = u.clone();
    for s in 0..batch.steps {
        for i in 0..m {
            let updated = u.get(s, i) + acc[s * m + i] / dt;
            out.set(s, i, updated);
        }
    }
    out
}

/// Diagnostics of one planning invocation. Cost statistics are over alive
/// rollouts and use the path cost (without the importance cross term).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiDiagnostics {
    pub ess: f64,
    pub min_cost: f64,
    pub mean_cost: f64,
    pub alive_fraction: f64,
}

impl PiDiagnostics {
    fn from_batch(batch: &RolloutBatch) -> Self {
        let alive: Vec<f64> = batch
            .costs
            .iter()
            .zip(&batch.alive)
            .filter(|(_, &a)| a)
            .map(|(&c, _)| c)
            .collect();
        let min_cost = alive.iter().copied().fold(f64::INFINITY, f64::min);
        let mean_cost = alive.iter().sum::<f64>() / alive.len().max(1) as f64;
        Self {
            ess: effective_sample_size(&batch.weights),
            min_cost,
            mean_cost,
            alive_fraction: alive.len() as f64 / batch.n as f64,
        }
    }
}

/// Output of one receding-horizon planning step.
#[derive(Debug, Clone)]
pub struct PiStep {
    /// Target velocity per agent for the end of the next replan period.
    pub v_next: Vec<Vector2<f64>>,
    /// Updated control sequence before shifting (first entry is `u*_t`).
    pub u_star: ControlSequence,
    /// Shifted sequence to warm-start the next replan.
    pub warm_next: ControlSequence,
    pub diag: PiDiagnostics,
}

/// One full planning invocation: sample, weight, update, hand off.
///
/// Propagates [`Error::NoFeasibleSample`]; the episode loop decides the
/// fail-safe in that case.
pub fn mpc_step(
    x0: &JointState,
    warm: &ControlSequence,
    cfg: &PiConfig,
    cost: &CostModel,
    seed: PlanSeed,
) -> Result<PiStep> {
    let mut batch = sample_rollouts(x0, warm, cfg, cost, seed)?;
    let scores = batch.scores();
    batch.weights = compute_weights(&scores, &batch.alive, cfg.lambda)?;
    let u_star = update_controls(warm, &batch, cfg.dt_s);
    let diag = PiDiagnostics::from_batch(&batch);
    let period = cfg.replan_period();
    let v_next = x0
        .agents()
        .iter()
        .enumerate()
        .map(|(i, a)| crate::dynamics::propagate_velocity_command(a.v, u_star.get(0, i), period))
        .collect();
    let warm_next = shift_warm_start(&u_star, cfg.shift_steps());
    Ok(PiStep {
        v_next,
        u_star,
        warm_next,
        diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{obstacle_violation, ObstacleSet, Rect};
    use crate::dynamics::AgentState;
    use approx::assert_relative_eq;

    fn cfg(n: usize, sigma_u: f64) -> PiConfig {
        PiConfig {
            n_samples: n,
            horizon_s: 0.5,
            dt_s: 0.1,
            lambda: 1.0,
            sigma_u,
            replan_hz: 10.0,
        }
    }

    fn origin_state() -> JointState {
        JointState::new(vec![AgentState::at_rest(Vector2::new(0.0, 0.0))])
    }

    #[test]
    fn zero_noise_rollouts_identical() {
        let c = cfg(8, 0.0);
        let warm = ControlSequence::zeros(c.steps(), 1);
        let cost = CostModel::new(|x| x.agent(0).p.norm_squared(), |_| 0.0, |_| false);
        let batch =
            sample_rollouts(&origin_state(), &warm, &c, &cost, PlanSeed::new(1, 0)).unwrap();
        let first = batch.path(0);
        for k in 1..batch.n {
            assert_eq!(batch.path(k), first);
            assert_eq!(batch.costs[k], batch.costs[0]);
        }
        assert!(batch.costs[0].is_finite());
    }

    #[test]
    fn zero_noise_nonzero_warm_all_costs_equal() {
        // With sigma_u = 0 the control cost matrix is infinite, so a warm
        // start with non-zero controls prices every (identical) path at +inf.
        let c = cfg(4, 0.0);
        let mut warm = ControlSequence::zeros(c.steps(), 1);
        warm.set(0, 0, Vector2::new(1.0, 0.0));
        let batch = sample_rollouts(
            &origin_state(),
            &warm,
            &c,
            &CostModel::zero(),
            PlanSeed::new(1, 0),
        )
        .unwrap();
        assert!(batch.costs.iter().all(|&s| s == batch.costs[0]));
        assert!(batch.costs[0].is_infinite());
    }

    #[test]
    fn batch_deterministic_across_runs_and_worker_counts() {
        let c = cfg(64, 0.8);
        let warm = ControlSequence::zeros(c.steps(), 1);
        let cost = CostModel::new(|x| x.agent(0).p.norm_squared(), |_| 0.0, |_| false);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                sample_rollouts(&origin_state(), &warm, &c, &cost, PlanSeed::new(9, 3)).unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        let c2 = run(1);
        assert_eq!(a.states, b.states);
        assert_eq!(a.noises, b.noises);
        assert_eq!(a.costs, b.costs);
        assert_eq!(a.corrections, b.corrections);
        assert_eq!(a.states, c2.states);
    }

    #[test]
    fn infeasible_start_raises() {
        let obstacles =
            ObstacleSet::new(vec![Rect::new([-1.0, -1.0], [1.0, 1.0]).unwrap()], 0.5).unwrap();
        let cost = CostModel::new(|_| 0.0, |_| 0.0, move |x| obstacle_violation(x, &obstacles));
        let c = cfg(16, 0.5);
        let warm = ControlSequence::zeros(c.steps(), 1);
        let err = sample_rollouts(&origin_state(), &warm, &c, &cost, PlanSeed::new(2, 0));
        assert!(matches!(err, Err(Error::NoFeasibleSample(16))));
    }

    #[test]
    fn weights_uniform_when_costs_equal() {
        let w = compute_weights(&[4.0, 4.0, 4.0], &[true, true, true], 1.0).unwrap();
        for wi in &w {
            assert_relative_eq!(*wi, 1.0 / 3.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn weights_softmax_hand_example() {
        // S = (0, ln 2), lambda = 1 -> w = (2/3, 1/3).
        let w = compute_weights(&[0.0, 2.0f64.ln()], &[true, true], 1.0).unwrap();
        assert_relative_eq!(w[0], 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(w[1], 1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_survivor_takes_all_weight() {
        let w = compute_weights(
            &[100.0, f64::INFINITY, f64::INFINITY],
            &[true, false, false],
            1.0,
        )
        .unwrap();
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn no_alive_rollouts_error() {
        assert!(matches!(
            compute_weights(&[1.0, 2.0], &[false, false], 1.0),
            Err(Error::NoFeasibleSample(2))
        ));
        // Alive but all infinite is equally infeasible.
        assert!(matches!(
            compute_weights(&[f64::INFINITY, f64::INFINITY], &[true, true], 1.0),
            Err(Error::NoFeasibleSample(2))
        ));
    }

    #[test]
    fn weight_shift_invariance() {
        // Exact binary values plus an exactly representable constant: the
        // max-shift makes the invariance literal.
        let scores = [3.0, 5.5, 9.25, 4.75];
        let alive = [true, true, true, true];
        let shifted: Vec<f64> = scores.iter().map(|s| s + 1024.0).collect();
        let a = compute_weights(&scores, &alive, 0.7).unwrap();
        let b = compute_weights(&shifted, &alive, 0.7).unwrap();
        assert_eq!(a, b);
        // Generic values: invariance within rounding.
        let scores2 = [3.1, 5.77, 9.131, 4.09];
        let shifted2: Vec<f64> = scores2.iter().map(|s| s + 123.456).collect();
        let c = compute_weights(&scores2, &alive, 0.7).unwrap();
        let d = compute_weights(&shifted2, &alive, 0.7).unwrap();
        for (x, y) in c.iter().zip(&d) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn killed_cost_value_is_ignored() {
        let alive = [true, false, true];
        let a = compute_weights(&[1.0, f64::INFINITY, 2.0], &alive, 1.0).unwrap();
        let b = compute_weights(&[1.0, -500.0, 2.0], &alive, 1.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1], 0.0);
    }

    #[test]
    fn ess_bounds_and_hand_example() {
        let n = 17;
        let uniform = vec![1.0 / n as f64; n];
        assert_relative_eq!(effective_sample_size(&uniform), n as f64, max_relative = 1e-12);
        let mut degenerate = vec![0.0; n];
        degenerate[3] = 1.0;
        assert_relative_eq!(effective_sample_size(&degenerate), 1.0, max_relative = 1e-15);
        let w = [2.0 / 3.0, 1.0 / 3.0];
        assert_relative_eq!(effective_sample_size(&w), 1.8, max_relative = 1e-12);
    }

    fn synthetic_batch(n: usize, steps: usize, agents: usize) -> RolloutBatch {
        RolloutBatch {
            n,
            steps,
            agents,
            costs: vec![0.0; n],
            corrections: vec![0.0; n],
            weights: vec![0.0; n],
            alive: vec![true; n],
            kill_step: vec![steps + 1; n],
            states: vec![0.0; n * (steps + 1) * 4 * agents],
            noises: vec![0.0; n * steps * 2 * agents],
        }
    }

    #[test]
    fn update_controls_single_sample() {
        // One rollout, weight 1, stored increment 0.05, dt 0.1 -> u* = 0.5.
        let mut batch = synthetic_batch(1, 1, 1);
        batch.noises[0] = 0.05;
        batch.weights = vec![1.0];
        let u = ControlSequence::zeros(1, 1);
        let out = update_controls(&u, &batch, 0.1);
        assert_relative_eq!(out.get(0, 0).x, 0.5, max_relative = 1e-15);
        assert_eq!(out.get(0, 0).y, 0.0);
    }

    #[test]
    fn update_controls_antisymmetric_noise_cancels() {
        let steps = 3;
        let mut batch = synthetic_batch(2, steps, 1);
        let stride = batch.noise_stride();
        for s in 0..stride {
            let v = (s as f64 + 1.0) * 0.01;
            batch.noises[s] = v;
            batch.noises[stride + s] = -v;
        }
        batch.weights = vec![0.5, 0.5];
        let mut u = ControlSequence::zeros(steps, 1);
        for s in 0..steps {
            u.set(s, 0, Vector2::new(s as f64, -(s as f64)));
        }
        let out = update_controls(&u, &batch, 0.1);
        assert_eq!(out, u);
    }

    #[test]
    fn killed_rollout_noise_never_contributes() {
        let mut batch = synthetic_batch(2, 2, 1);
        let stride = batch.noise_stride();
        batch.noises[0..stride].fill(0.3);
        batch.noises[stride..].fill(77.0); // killed rollout's stored noise
        batch.alive[1] = false;
        batch.kill_step[1] = 1;
        batch.weights = vec![1.0, 0.0];
        let u = ControlSequence::zeros(2, 1);
        let out = update_controls(&u, &batch, 0.1);
        for s in 0..2 {
            assert_relative_eq!(out.get(s, 0).x, 3.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn shift_warm_start_cases() {
        let mut u = ControlSequence::zeros(3, 1);
        u.set(0, 0, Vector2::new(1.0, 0.0));
        u.set(1, 0, Vector2::new(2.0, 0.0));
        u.set(2, 0, Vector2::new(3.0, 0.0));
        assert_eq!(shift_warm_start(&u, 0), u);
        let z = shift_warm_start(&u, 3);
        assert_eq!(z, ControlSequence::zeros(3, 1));
        let s1 = shift_warm_start(&u, 1);
        assert_eq!(s1.get(0, 0).x, 2.0);
        assert_eq!(s1.get(1, 0).x, 3.0);
        assert_eq!(s1.get(2, 0), Vector2::zeros());
    }

    #[test]
    fn mpc_step_zero_cost_velocity_is_unbiased() {
        // With zero state cost and zero warm start the update is a weighted
        // mean of symmetric noise: across seeds, E[v_next] = v_t. Checked to
        // three standard errors over 100 seeds.
        let c = PiConfig {
            n_samples: 200,
            horizon_s: 1.0,
            dt_s: 0.1,
            lambda: 1.0,
            sigma_u: 0.5,
            replan_hz: 10.0,
        };
        let v0 = Vector2::new(0.7, -0.2);
        let x0 = JointState::new(vec![AgentState::new(Vector2::zeros(), v0)]);
        let warm = ControlSequence::zeros(c.steps(), 1);
        let mut samples = Vec::new();
        for seedv in 0..100u64 {
            let out = mpc_step(&x0, &warm, &c, &CostModel::zero(), PlanSeed::new(seedv, 0))
                .unwrap();
            samples.push(out.v_next[0]);
        }
        for axis in 0..2 {
            let vals: Vec<f64> = samples.iter().map(|v| v[axis]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / (vals.len() - 1) as f64;
            let se = (var / vals.len() as f64).sqrt();
            assert!(
                (mean - v0[axis]).abs() <= 3.0 * se,
                "axis {axis}: mean {mean} vs {} (se {se})",
                v0[axis]
            );
        }
    }

    #[test]
    fn mpc_step_deterministic() {
        let c = cfg(32, 0.4);
        let x0 = origin_state();
        let warm = ControlSequence::zeros(c.steps(), 1);
        let cost = CostModel::new(|x| x.agent(0).p.norm_squared(), |_| 0.0, |_| false);
        let a = mpc_step(&x0, &warm, &c, &cost, PlanSeed::new(5, 11)).unwrap();
        let b = mpc_step(&x0, &warm, &c, &cost, PlanSeed::new(5, 11)).unwrap();
        assert_eq!(a.u_star, b.u_star);
        assert_eq!(a.v_next, b.v_next);
        assert_eq!(a.diag, b.diag);
    }

    #[test]
    fn diagnostics_bounds() {
        let c = cfg(50, 0.6);
        let x0 = origin_state();
        let warm = ControlSequence::zeros(c.steps(), 1);
        let cost = CostModel::new(|x| x.agent(0).p.norm_squared(), |_| 0.0, |_| false);
        let out = mpc_step(&x0, &warm, &c, &cost, PlanSeed::new(3, 0)).unwrap();
        assert!(out.diag.ess >= 1.0 - 1e-9 && out.diag.ess <= 50.0 + 1e-9);
        assert!(out.diag.alive_fraction == 1.0);
        assert!(out.diag.min_cost <= out.diag.mean_cost);
    }
}
