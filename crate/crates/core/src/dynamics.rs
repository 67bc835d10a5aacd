//! Point-mass state representation and noisy double-integrator propagation.
//!
//! Each agent is a planar point mass: position `p` and velocity `v`, driven
//! by an acceleration control plus a Wiener increment that enters the
//! velocity row only,
//!
//! ```text
//! p' = p + v·dt
//! v' = v + u·dt + dξ
//! ```
//!
//! The update is exact one-step Euler–Maruyama for this LTI pair and is used
//! unchanged for rollout sampling and for the simulated plant. Agents are
//! decoupled: agent `i`'s next state depends only on agent `i`'s state,
//! control and noise. The flat layout is agent-major `(p_E, p_N, v_E, v_N)`
//! per agent; log files use the same order.

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Position (m, East/North) and velocity (m/s) of one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub p: Vector2<f64>,
    pub v: Vector2<f64>,
}

impl AgentState {
    pub fn new(p: Vector2<f64>, v: Vector2<f64>) -> Self {
        Self { p, v }
    }

    pub fn at_rest(p: Vector2<f64>) -> Self {
        Self {
            p,
            v: Vector2::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }
}

/// Stacked states of all `M` agents; the planner state.
///
/// Agent count and ordering are fixed for the lifetime of a scenario and
/// agents are index-addressable.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    agents: Vec<AgentState>,
}

impl JointState {
    /// Panics if `agents` is empty; a scenario always has at least one agent.
    pub fn new(agents: Vec<AgentState>) -> Self {
        assert!(!agents.is_empty(), "JointState requires at least one agent");
        Self { agents }
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentState {
        &self.agents[i]
    }

    pub fn agent_mut(&mut self, i: usize) -> &mut AgentState {
        &mut self.agents[i]
    }

    pub fn is_finite(&self) -> bool {
        self.agents.iter().all(AgentState::is_finite)
    }

    /// Flat agent-major vector `(p_E, p_N, v_E, v_N)` per agent.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.agents.len());
        for a in &self.agents {
            out.extend_from_slice(&[a.p.x, a.p.y, a.v.x, a.v.y]);
        }
        out
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        assert!(
            flat.len() % 4 == 0 && !flat.is_empty(),
            "flat state length must be a positive multiple of 4"
        );
        Self {
            agents: flat
                .chunks_exact(4)
                .map(|c| AgentState::new(Vector2::new(c[0], c[1]), Vector2::new(c[2], c[3])))
                .collect(),
        }
    }
}

/// Step size, per-axis noise level and agent count of the planner model.
///
/// Noise is isotropic: the increment covariance over one step is
/// `sigma_u² · dt · Identity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsModel {
    pub dt: f64,
    pub sigma_u: f64,
    pub agents: usize,
}

impl DynamicsModel {
    pub fn new(dt: f64, sigma_u: f64, agents: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("dynamics.dt", "must be finite and > 0"));
        }
        if !(sigma_u >= 0.0) || !sigma_u.is_finite() {
            return Err(Error::invalid("dynamics.sigma_u", "must be finite and >= 0"));
        }
        if agents == 0 {
            return Err(Error::invalid("dynamics.agents", "must be >= 1"));
        }
        Ok(Self {
            dt,
            sigma_u,
            agents,
        })
    }

    /// Standard deviation of one velocity increment component.
    pub fn increment_std(&self) -> f64 {
        self.sigma_u * self.dt.sqrt()
    }
}

/// Per-agent Wiener increments over one step (m/s), matching the control
/// dimension of two per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub dxi: Vec<Vector2<f64>>,
}

impl NoiseIncrement {
    pub fn zeros(agents: usize) -> Self {
        Self {
            dxi: vec![Vector2::zeros(); agents],
        }
    }
}

/// One-agent Euler–Maruyama update; the single source of the propagation rule.
#[inline]
pub fn step_agent(agent: &AgentState, u: Vector2<f64>, dxi: Vector2<f64>, dt: f64) -> AgentState {
    AgentState {
        p: agent.p + agent.v * dt,
        v: agent.v + u * dt + dxi,
    }
}

/// Propagate the joint state one step under per-agent accelerations and noise.
///
/// Rejects dimension mismatches and non-finite inputs; agents are advanced
/// independently.
pub fn step(
    state: &JointState,
    control: &[Vector2<f64>],
    noise: &NoiseIncrement,
    dt: f64,
) -> Result<JointState> {
    let m = state.agent_count();
    if control.len() != m {
        return Err(Error::DimensionMismatch {
            what: "step control",
            expected: m,
            got: control.len(),
        });
    }
    if noise.dxi.len() != m {
        return Err(Error::DimensionMismatch {
            what: "step noise",
            expected: m,
            got: noise.dxi.len(),
        });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::NonFinite("step dt"));
    }
    if !state.is_finite() {
        return Err(Error::NonFinite("step state"));
    }
    let finite_vecs = |vs: &[Vector2<f64>]| vs.iter().all(|v| v.x.is_finite() && v.y.is_finite());
    if !finite_vecs(control) {
        return Err(Error::NonFinite("step control"));
    }
    if !finite_vecs(&noise.dxi) {
        return Err(Error::NonFinite("step noise"));
    }

    let agents = state
        .agents()
        .iter()
        .zip(control.iter().zip(noise.dxi.iter()))
        .map(|(a, (&u, &dxi))| step_agent(a, u, dxi, dt))
        .collect();
    Ok(JointState::new(agents))
}

/// Draw one noise increment: each component independent, zero mean, variance
/// `sigma_u² · dt`.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, model: &DynamicsModel) -> NoiseIncrement {
    let std = model.increment_std();
    NoiseIncrement {
        dxi: (0..model.agents)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                Vector2::new(x * std, y * std)
            })
            .collect(),
    }
}

/// Target velocity handed to the low-level layer: `v + Δt·u*`.
pub fn propagate_velocity_command(
    v_now: Vector2<f64>,
    u_star: Vector2<f64>,
    dt: f64,
) -> Vector2<f64> {
    v_now + u_star * dt
}
