//! Path cost functional, control-cost/noise duality and scenario state costs.
//!
//! The cost attributed to a sampled path is the terminal state cost plus the
//! accumulated running state cost and quadratic control cost,
//!
//! ```text
//! S = r_T(x_T) + Σ_t (r_t(x_t) + ½ u_tᵀ R u_t) · dt
//! ```
//!
//! with the control cost matrix tied to the exploration noise through
//! `Σu = λ R⁻¹`, so `R = λ/σu² · I` is never set independently. Hard
//! constraints are a predicate rather than a large finite cost: the sampler
//! kills violating rollouts outright and their weights are exactly zero.

use std::sync::Arc;

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::JointState;
use crate::pi::ControlSequence;
use crate::{Error, Result};

/// Temperature and the isotropic control cost it induces.
///
/// `R = lambda / sigma_u²` per axis, enforced at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCostSpec {
    lambda: f64,
    sigma_u: f64,
}

impl ControlCostSpec {
    pub fn new(lambda: f64, sigma_u: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid("lambda", "must be finite and > 0"));
        }
        if !(sigma_u >= 0.0) || !sigma_u.is_finite() {
            return Err(Error::invalid("sigma_u", "must be finite and >= 0"));
        }
        Ok(Self { lambda, sigma_u })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma_u(&self) -> f64 {
        self.sigma_u
    }

    /// Scalar control cost per axis, `λ/σu²`; infinite when `σu = 0`.
    pub fn r(&self) -> f64 {
        self.lambda / (self.sigma_u * self.sigma_u)
    }

    /// Scalar noise variance per axis, `σu² = λ·R⁻¹`.
    pub fn r_inv_lambda(&self) -> f64 {
        self.sigma_u * self.sigma_u
    }

    /// `½ uᵀR u` for one per-agent control, guarded so that `u = 0` costs
    /// exactly zero even when `R` is infinite (`σu = 0`).
    pub fn quad_control_cost(&self, u: &[Vector2<f64>]) -> f64 {
        let sq: f64 = u.iter().map(|c| c.norm_squared()).sum();
        if sq == 0.0 {
            0.0
        } else {
            0.5 * self.r() * sq
        }
    }
}

/// Scenario cost: running state cost (per second), terminal state cost and a
/// hard-constraint predicate, all pure functions of the joint state.
///
/// Optional analytic derivatives can be registered; the iLQG quadratizer
/// falls back to finite differences when they are absent.
#[derive(Clone)]
pub struct CostModel {
    running: Arc<dyn Fn(&JointState) -> f64 + Send + Sync>,
    terminal: Arc<dyn Fn(&JointState) -> f64 + Send + Sync>,
    hard: Arc<dyn Fn(&JointState) -> bool + Send + Sync>,
    running_grad: Option<Arc<dyn Fn(&JointState) -> Vec<f64> + Send + Sync>>,
    terminal_grad: Option<Arc<dyn Fn(&JointState) -> Vec<f64> + Send + Sync>>,
    running_hess: Option<Arc<dyn Fn(&JointState) -> DMatrix<f64> + Send + Sync>>,
    terminal_hess: Option<Arc<dyn Fn(&JointState) -> DMatrix<f64> + Send + Sync>>,
}

impl CostModel {
    pub fn new(
        running: impl Fn(&JointState) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(&JointState) -> f64 + Send + Sync + 'static,
        hard: impl Fn(&JointState) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            running: Arc::new(running),
            terminal: Arc::new(terminal),
            hard: Arc::new(hard),
            running_grad: None,
            terminal_grad: None,
            running_hess: None,
            terminal_hess: None,
        }
    }

    /// All-zero cost with no hard constraints.
    pub fn zero() -> Self {
        Self::new(|_| 0.0, |_| 0.0, |_| false)
    }

    pub fn with_running_grad(
        mut self,
        g: impl Fn(&JointState) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.running_grad = Some(Arc::new(g));
        self
    }

    pub fn with_terminal_grad(
        mut self,
        g: impl Fn(&JointState) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.terminal_grad = Some(Arc::new(g));
        self
    }

    pub fn with_running_hess(
        mut self,
        h: impl Fn(&JointState) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.running_hess = Some(Arc::new(h));
        self
    }

    pub fn with_terminal_hess(
        mut self,
        h: impl Fn(&JointState) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.terminal_hess = Some(Arc::new(h));
        self
    }

    #[inline]
    pub fn running(&self, x: &JointState) -> f64 {
        (self.running)(x)
    }

    #[inline]
    pub fn terminal(&self, x: &JointState) -> f64 {
        (self.terminal)(x)
    }

    #[inline]
    pub fn hard_violation(&self, x: &JointState) -> bool {
        (self.hard)(x)
    }

    pub fn running_grad(&self, x: &JointState) -> Option<Vec<f64>> {
        self.running_grad.as_ref().map(|g| g(x))
    }

    pub fn terminal_grad(&self, x: &JointState) -> Option<Vec<f64>> {
        self.terminal_grad.as_ref().map(|g| g(x))
    }

    pub fn running_hess(&self, x: &JointState) -> Option<DMatrix<f64>> {
        self.running_hess.as_ref().map(|h| h(x))
    }

    pub fn terminal_hess(&self, x: &JointState) -> Option<DMatrix<f64>> {
        self.terminal_hess.as_ref().map(|h| h(x))
    }
}

impl std::fmt::Debug for CostModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CostModel")
            .field("analytic_grad", &self.running_grad.is_some())
            .field("analytic_hess", &self.running_hess.is_some())
            .finish()
    }
}

/// How the radial term of the holding-pattern cost treats the circle of
/// radius `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArenaMode {
    /// `exp(|‖p‖ − d|)`: agents are attracted onto the circle itself.
    #[default]
    Ring,
    /// `exp(‖p‖ − d)`: one-sided soft wall, negligible well inside the
    /// circle. Used by the pursuit scenario where `d` bounds the arena.
    Boundary,
}

/// Speed band, target radius and pairwise collision-risk weight of the
/// holding-pattern cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldingPatternParams {
    pub v_min: f64,
    pub v_max: f64,
    pub d: f64,
    pub c_hit: f64,
    #[serde(default)]
    pub arena: ArenaMode,
}

impl HoldingPatternParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min < self.v_max) {
            return Err(Error::invalid(
                "cost.v_min/cost.v_max",
                format!("require v_min < v_max, got {} >= {}", self.v_min, self.v_max),
            ));
        }
        if !(self.d > 0.0) {
            return Err(Error::invalid("cost.d", "must be > 0"));
        }
        if !(self.c_hit >= 0.0) {
            return Err(Error::invalid("cost.c_hit", "must be >= 0"));
        }
        Ok(())
    }
}

/// Holding-pattern parameters plus the evader's speed cap. The mouse
/// position itself is scenario state, not a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatMouseParams {
    pub hp: HoldingPatternParams,
    pub v_max_mouse: f64,
}

impl CatMouseParams {
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if !(self.v_max_mouse > 0.0) {
            return Err(Error::invalid("cost.v_max_mouse", "must be > 0"));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle (closed), corners in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        if !(min[0] < max[0] && min[1] < max[1]) {
            return Err(Error::invalid(
                "obstacle box",
                format!("corners must satisfy min < max, got {min:?}, {max:?}"),
            ));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: Vector2<f64>) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }

    /// Euclidean distance from a point to the rectangle; zero inside.
    pub fn distance(&self, p: Vector2<f64>) -> f64 {
        let dx = (self.min[0] - p.x).max(p.x - self.max[0]).max(0.0);
        let dy = (self.min[1] - p.y).max(p.y - self.max[1]).max(0.0);
        (dx * dx + dy * dy).sqrt()
    }

    /// Signed distance: positive outside, negative inside (to the nearest
    /// face), zero on the boundary.
    pub fn signed_distance(&self, p: Vector2<f64>) -> f64 {
        let qx = (self.min[0] - p.x).max(p.x - self.max[0]);
        let qy = (self.min[1] - p.y).max(p.y - self.max[1]);
        if qx > 0.0 || qy > 0.0 {
            let cx = qx.max(0.0);
            let cy = qy.max(0.0);
            (cx * cx + cy * cy).sqrt()
        } else {
            qx.max(qy)
        }
    }

    /// Gradient of the signed distance with respect to the point. Not
    /// defined on the boundary/medial axis; callers sample off those sets.
    pub fn signed_distance_grad(&self, p: Vector2<f64>) -> Vector2<f64> {
        let qx = (self.min[0] - p.x).max(p.x - self.max[0]);
        let qy = (self.min[1] - p.y).max(p.y - self.max[1]);
        // d qx / d p.x: +1 beyond max, -1 before min.
        let sx = if p.x - self.max[0] >= self.min[0] - p.x { 1.0 } else { -1.0 };
        let sy = if p.y - self.max[1] >= self.min[1] - p.y { 1.0 } else { -1.0 };
        if qx > 0.0 || qy > 0.0 {
            let cx = qx.max(0.0);
            let cy = qy.max(0.0);
            let d = (cx * cx + cy * cy).sqrt();
            Vector2::new(if qx > 0.0 { sx * cx / d } else { 0.0 }, if qy > 0.0 {
                sy * cy / d
            } else {
                0.0
            })
        } else if qx >= qy {
            Vector2::new(sx, 0.0)
        } else {
            Vector2::new(0.0, sy)
        }
    }
}

/// Workspace obstacles and the disc radius of each agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSet {
    pub boxes: Vec<Rect>,
    pub agent_radius: f64,
}

impl ObstacleSet {
    pub fn new(boxes: Vec<Rect>, agent_radius: f64) -> Result<Self> {
        if !(agent_radius >= 0.0) || !agent_radius.is_finite() {
            return Err(Error::invalid("agent_radius", "must be finite and >= 0"));
        }
        Ok(Self {
            boxes,
            agent_radius,
        })
    }

    pub fn empty(agent_radius: f64) -> Self {
        Self {
            boxes: Vec::new(),
            agent_radius,
        }
    }
}

/// Path cost per the functional above; `+inf` if any state along the
/// trajectory (terminal included) violates the hard constraint.
pub fn path_cost(
    trajectory: &[JointState],
    controls: &ControlSequence,
    spec: &ControlCostSpec,
    model: &CostModel,
    dt: f64,
) -> Result<f64> {
    if trajectory.len() != controls.len() + 1 {
        return Err(Error::DimensionMismatch {
            what: "path_cost trajectory vs controls",
            expected: controls.len() + 1,
            got: trajectory.len(),
        });
    }
    if trajectory.iter().any(|x| model.hard_violation(x)) {
        return Ok(f64::INFINITY);
    }
    let mut total = model.terminal(trajectory.last().expect("non-empty trajectory"));
    for (x, u) in trajectory.iter().zip(controls.steps()) {
        total += (model.running(x) + spec.quad_control_cost(u)) * dt;
    }
    Ok(total)
}

/// Radial term of the holding-pattern cost.
#[inline]
pub fn arena_term(radius: f64, d: f64, mode: ArenaMode) -> f64 {
    match mode {
        ArenaMode::Ring => (radius - d).abs().exp(),
        ArenaMode::Boundary => (radius - d).exp(),
    }
}

/// Holding-pattern state cost: per-agent speed-band and radial terms plus a
/// pairwise collision-risk term; `+inf` for coincident agents.
pub fn holding_pattern_cost(state: &JointState, params: &HoldingPatternParams) -> f64 {
    let agents = state.agents();
    let mut cost = 0.0;
    for a in agents {
        let speed = a.v.norm();
        cost += (speed - params.v_max).exp() + (params.v_min - speed).exp();
        cost += arena_term(a.p.norm(), params.d, params.arena);
    }
    for i in 0..agents.len() {
        for j in (i + 1)..agents.len() {
            let sep = (agents[i].p - agents[j].p).norm();
            if sep == 0.0 {
                return f64::INFINITY;
            }
            cost += params.c_hit / sep;
        }
    }
    cost
}

/// Pursuit state cost: holding-pattern cost plus the summed distances from
/// each cat to the mouse.
pub fn cat_mouse_cost(state: &JointState, mouse: Vector2<f64>, params: &CatMouseParams) -> f64 {
    let dist_sum: f64 = state.agents().iter().map(|a| (a.p - mouse).norm()).sum();
    holding_pattern_cost(state, &params.hp) + dist_sum
}

/// True iff any agent disc touches a box or two agent discs touch.
/// Contact counts as violation (closed sets, ties break toward collision).
pub fn obstacle_violation(state: &JointState, obstacles: &ObstacleSet) -> bool {
    let agents = state.agents();
    let r = obstacles.agent_radius;
    for a in agents {
        for b in &obstacles.boxes {
            if b.distance(a.p) <= r {
                return true;
            }
        }
    }
    for i in 0..agents.len() {
        for j in (i + 1)..agents.len() {
            if (agents[i].p - agents[j].p).norm() <= 2.0 * r {
                return true;
            }
        }
    }
    false
}

/// Smooth obstacle-proximity penalty: `Σ weight · exp(−sd/scale)` over
/// agent/box pairs, where `sd` is the signed distance of the agent center to
/// the box. Strictly positive, grows as clearance shrinks; used by iLQG in
/// place of hard constraints.
pub fn smooth_obstacle_penalty(
    state: &JointState,
    obstacles: &ObstacleSet,
    scale: f64,
    weight: f64,
) -> f64 {
    assert!(scale > 0.0, "penalty scale must be > 0");
    let mut total = 0.0;
    for a in state.agents() {
        for b in &obstacles.boxes {
            total += weight * (-b.signed_distance(a.p) / scale).exp();
        }
    }
    total
}

/// Analytic gradient of [`smooth_obstacle_penalty`] with respect to each
/// agent position.
pub fn smooth_obstacle_penalty_grad(
    state: &JointState,
    obstacles: &ObstacleSet,
    scale: f64,
    weight: f64,
) -> Vec<Vector2<f64>> {
    state
        .agents()
        .iter()
        .map(|a| {
            let mut g = Vector2::zeros();
            for b in &obstacles.boxes {
                let sd = b.signed_distance(a.p);
                g += b.signed_distance_grad(a.p) * (-(weight / scale) * (-sd / scale).exp());
            }
            g
        })
        .collect()
}

/// Holding-pattern cost model (no hard obstacle geometry; agent collisions
/// become hard when an [`ObstacleSet`] is attached by the scenario layer).
pub fn holding_pattern_model(params: HoldingPatternParams, obstacles: ObstacleSet) -> CostModel {
    let terminal_params = params;
    CostModel::new(
        move |x| holding_pattern_cost(x, &params),
        move |x| holding_pattern_cost(x, &terminal_params),
        move |x| obstacle_violation(x, &obstacles),
    )
}

/// Pursuit cost model with the mouse frozen at its position at planning time.
pub fn cat_mouse_model(
    params: CatMouseParams,
    mouse: Vector2<f64>,
    obstacles: ObstacleSet,
) -> CostModel {
    let terminal = (params, mouse);
    CostModel::new(
        move |x| cat_mouse_cost(x, mouse, &params),
        move |x| cat_mouse_cost(x, terminal.1, &terminal.0),
        move |x| obstacle_violation(x, &obstacles),
    )
}

/// Diagonal quadratic state cost `r(x) = ½ Σ q_i (x_i − target_i)²` over the
/// flat agent-major state, with analytic derivatives registered.
pub fn quadratic_model(q_run: Vec<f64>, q_term: Vec<f64>, target: Vec<f64>) -> CostModel {
    assert_eq!(q_run.len(), target.len());
    assert_eq!(q_term.len(), target.len());
    let quad = |q: &[f64], target: &[f64], x: &JointState| -> f64 {
        let flat = x.to_flat();
        0.5 * flat
            .iter()
            .zip(q.iter().zip(target.iter()))
            .map(|(&xi, (&qi, &ti))| qi * (xi - ti) * (xi - ti))
            .sum::<f64>()
    };
    let grad = |q: &[f64], target: &[f64], x: &JointState| -> Vec<f64> {
        x.to_flat()
            .iter()
            .zip(q.iter().zip(target.iter()))
            .map(|(&xi, (&qi, &ti))| qi * (xi - ti))
            .collect()
    };
    let hess = |q: &[f64]| DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(q));

    let (qr, tg) = (q_run.clone(), target.clone());
    let (qt, tg1) = (q_term.clone(), target.clone());
    let (qr2, tg2) = (q_run.clone(), target.clone());
    let (qt2, tg3) = (q_term.clone(), target);
    let qr3 = q_run;
    let qt3 = q_term;
    CostModel::new(
        move |x| quad(&qr, &tg, x),
        move |x| quad(&qt, &tg1, x),
        |_| false,
    )
    .with_running_grad(move |x| grad(&qr2, &tg2, x))
    .with_terminal_grad(move |x| grad(&qt2, &tg3, x))
    .with_running_hess(move |_| hess(&qr3))
    .with_terminal_hess(move |_| hess(&qt3))
}
