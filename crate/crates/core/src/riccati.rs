//! Finite-horizon discrete-time LQR via backward Riccati recursion.
//!
//! Reference solver for linear-quadratic instances: it shares no code with
//! the sampling controller or the iLQG optimizer, so it serves as an
//! independent check on both, and its open-loop control sequence doubles as
//! a warm start. The objective convention matches the path cost functional:
//!
//! ```text
//! ½ Σ_{t<T} (x_tᵀ Q x_t + u_tᵀ R u_t) + ½ x_Tᵀ Qf x_T
//! ```
//!
//! with `Q`, `R` already carrying any per-step `dt` scaling the caller wants.

use nalgebra::{DMatrix, DVector};

/// Finite-horizon LQR instance. States are measured relative to the target
/// (shift coordinates so the goal is the origin).
#[derive(Debug, Clone)]
pub struct LqrProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub qf: DMatrix<f64>,
    pub steps: usize,
}

/// Per-step feedback gains and the open-loop optimum from a start state.
#[derive(Debug, Clone)]
pub struct LqrSolution {
    /// `u_t = gains[t] · x_t`.
    pub gains: Vec<DMatrix<f64>>,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

/// Discrete double-integrator pair for `m` agents in the agent-major layout
/// `(p_E, p_N, v_E, v_N)` per agent: position integrates the old velocity,
/// control enters velocity scaled by `dt`.
pub fn double_integrator_discrete(agents: usize, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = 4 * agents;
    let m = 2 * agents;
    let mut a = DMatrix::identity(n, n);
    let mut b = DMatrix::zeros(n, m);
    for i in 0..agents {
        a[(4 * i, 4 * i + 2)] = dt;
        a[(4 * i + 1, 4 * i + 3)] = dt;
        b[(4 * i + 2, 2 * i)] = dt;
        b[(4 * i + 3, 2 * i + 1)] = dt;
    }
    (a, b)
}

/// Backward Riccati pass: per-step gains `K_t` with `u_t = K_t x_t`.
pub fn solve_gains(problem: &LqrProblem) -> Vec<DMatrix<f64>> {
    let mut v = problem.qf.clone();
    let mut gains = vec![DMatrix::zeros(problem.b.ncols(), problem.a.nrows()); problem.steps];
    for t in (0..problem.steps).rev() {
        let bt_v = problem.b.transpose() * &v;
        let quu = &problem.r + &bt_v * &problem.b;
        let qux = &bt_v * &problem.a;
        let quu_inv = quu
            .try_inverse()
            .expect("control-cost block must be positive definite");
        let k = -&quu_inv * &qux;
        let at_v_a = problem.a.transpose() * &v * &problem.a;
        v = &problem.q + at_v_a + qux.transpose() * &k;
        // Symmetrize against roundoff drift.
        v = (&v + v.transpose()) * 0.5;
        gains[t] = k;
    }
    gains
}

/// Forward pass from `x0` under the optimal feedback; the resulting control
/// sequence is the optimal open-loop plan (certainty equivalence).
pub fn open_loop(problem: &LqrProblem, gains: &[DMatrix<f64>], x0: DVector<f64>) -> LqrSolution {
    let mut states = Vec::with_capacity(problem.steps + 1);
    let mut controls = Vec::with_capacity(problem.steps);
    let mut x = x0;
    for k in gains {
        let u = k * &x;
        let next = &problem.a * &x + &problem.b * &u;
        states.push(x);
        controls.push(u);
        x = next;
    }
    states.push(x);
    LqrSolution {
        gains: gains.to_vec(),
        states,
        controls,
    }
}

/// Solve the instance end to end.
pub fn solve(problem: &LqrProblem, x0: DVector<f64>) -> LqrSolution {
    let gains = solve_gains(problem);
    open_loop(problem, &gains, x0)
}

/// Total objective of an explicit control sequence, by direct accumulation.
pub fn sequence_cost(problem: &LqrProblem, x0: &DVector<f64>, controls: &[DVector<f64>]) -> f64 {
    assert_eq!(controls.len(), problem.steps);
    let mut x = x0.clone();
    let mut total = 0.0;
    for u in controls {
        total += 0.5 * (x.transpose() * &problem.q * &x)[(0, 0)];
        total += 0.5 * (u.transpose() * &problem.r * u)[(0, 0)];
        x = &problem.a * &x + &problem.b * u;
    }
    total + 0.5 * (x.transpose() * &problem.qf * &x)[(0, 0)]
}
