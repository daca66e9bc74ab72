//! Small dense quadratic programs for CBF safety filtering.
//!
//! Problems have the fixed shape
//!
//!   minimize    1/2 ||u - u0||^2 + 1/2 w d^2
//!   subject to  A_i u + b_i + c_i d <= 0        (constraint rows)
//!               u_lo <= u <= u_hi               (box bounds)
//!
//! with at most a handful of variables, solved by a primal active-set
//! method on the strictly convex objective. Box bounds are ordinary rows.
//! An infeasible problem (hard rows conflicting with the box) reports
//! `Infeasible` together with the control minimizing the maximum row
//! violation inside the box, found by a lightly regularized minimax pass
//! through the same active-set core.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-12;
const MULT_TOL: f64 = 1e-10;

/// One affine constraint row A u + b + c d <= 0.
#[derive(Debug, Clone)]
pub struct ConstraintRow {
    pub a: RowDVector<f64>,
    pub b: f64,
    /// Slack coefficient: 0 for hard rows, -1 for softened rows.
    pub c: f64,
}

impl ConstraintRow {
    pub fn hard(a: RowDVector<f64>, b: f64) -> Self {
        Self { a, b, c: 0.0 }
    }

    pub fn soft(a: RowDVector<f64>, b: f64) -> Self {
        Self { a, b, c: -1.0 }
    }

    /// Signed residual at (u, d); satisfied iff <= 0.
    pub fn residual(&self, u: &DVector<f64>, slack: f64) -> f64 {
        self.a.dot(&u.transpose()) + self.b + self.c * slack
    }
}

/// A CBF-QP instance.
#[derive(Debug, Clone)]
pub struct CbfQpProblem {
    pub u_nominal: DVector<f64>,
    /// Weight on the slack quadratic; must be positive if any row is soft.
    pub slack_weight: f64,
    pub rows: Vec<ConstraintRow>,
    pub u_lower: DVector<f64>,
    pub u_upper: DVector<f64>,
}

impl CbfQpProblem {
    pub fn new(
        u_nominal: DVector<f64>,
        slack_weight: f64,
        u_lower: DVector<f64>,
        u_upper: DVector<f64>,
    ) -> Self {
        Self { u_nominal, slack_weight, rows: Vec::new(), u_lower, u_upper }
    }

    pub fn push_row(&mut self, row: ConstraintRow) {
        self.rows.push(row);
    }

    fn has_slack(&self) -> bool {
        self.rows.iter().any(|r| r.c != 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.u_nominal.len();
        if m == 0 || m > 8 {
            return Err(Error::Contract(format!("control dimension must be in 1..=8, got {m}")));
        }
        if self.rows.len() > 64 {
            return Err(Error::Contract(format!(
                "at most 64 constraint rows supported, got {}",
                self.rows.len()
            )));
        }
        if self.u_lower.len() != m || self.u_upper.len() != m {
            return Err(Error::Contract("box bounds must match the control dimension".into()));
        }
        for j in 0..m {
            if !(self.u_lower[j] <= self.u_upper[j]) {
                return Err(Error::Contract(format!(
                    "box bound {j}: lower {} > upper {}",
                    self.u_lower[j], self.u_upper[j]
                )));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.a.len() != m {
                return Err(Error::Contract(format!(
                    "row {i} has {} coefficients, control dimension is {m}",
                    r.a.len()
                )));
            }
            if !r.a.iter().all(|v| v.is_finite()) || !r.b.is_finite() || !r.c.is_finite() {
                return Err(Error::Contract(format!("row {i} has non-finite coefficients")));
            }
        }
        if self.has_slack() && self.slack_weight <= 0.0 {
            return Err(Error::Contract(
                "slack weight must be positive when any row is soft".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

/// Solver output. For infeasible problems `u` is the minimum-violation
/// fallback, `slack` is 0, and `max_violation` carries the residual.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u: DVector<f64>,
    pub slack: f64,
    pub status: QpStatus,
    /// Multipliers of the user constraint rows (zero when inactive).
    pub row_multipliers: Vec<f64>,
    /// Max of stationarity / primal / dual / complementarity residuals.
    pub kkt_residual: f64,
    /// Largest hard-row violation at the returned point.
    pub max_violation: f64,
    pub iterations: usize,
}

impl QpSolution {
    pub fn objective(&self, problem: &CbfQpProblem) -> f64 {
        let d = &self.u - &problem.u_nominal;
        0.5 * d.norm_squared() + 0.5 * problem.slack_weight * self.slack * self.slack
    }
}

/// Dense strictly convex QP in generic coordinates:
/// min 1/2 z' diag(h) z + g' z  s.t.  C z <= d.
struct Dense {
    h: DVector<f64>,
    g: DVector<f64>,
    rows: Vec<(RowDVector<f64>, f64)>,
}

impl Dense {
    fn dim(&self) -> usize {
        self.h.len()
    }

    fn residual(&self, i: usize, z: &DVector<f64>) -> f64 {
        self.rows[i].0.dot(&z.transpose()) - self.rows[i].1
    }
}

struct ActiveSetResult {
    z: DVector<f64>,
    /// Multiplier per constraint row (0 when inactive).
    lambda: Vec<f64>,
    iterations: usize,
}

/// Primal active-set iteration from a feasible start.
///
/// Blocking rows are always independent of the working set (a dependent
/// row cannot block a step that moves inside the working-set nullspace),
/// so the KKT systems stay nonsingular when started from an empty set.
fn active_set(p: &Dense, mut z: DVector<f64>, max_iter: usize) -> Result<ActiveSetResult> {
    let d = p.dim();
    let mut working: Vec<usize> = Vec::new();
    let mut lambda = vec![0.0; p.rows.len()];

    for iter in 0..max_iter {
        let k = working.len();
        let mut grad = DVector::zeros(d);
        for j in 0..d {
            grad[j] = p.h[j] * z[j] + p.g[j];
        }
        // Equality subproblem [H C_W'; C_W 0][step; mult] = [-grad; 0].
        let (step, mult) = if k == 0 {
            let mut s = DVector::zeros(d);
            for j in 0..d {
                s[j] = -grad[j] / p.h[j];
            }
            (s, Vec::new())
        } else {
            let mut kkt = DMatrix::zeros(d + k, d + k);
            for j in 0..d {
                kkt[(j, j)] = p.h[j];
            }
            for (wi, &ri) in working.iter().enumerate() {
                for j in 0..d {
                    kkt[(d + wi, j)] = p.rows[ri].0[j];
                    kkt[(j, d + wi)] = p.rows[ri].0[j];
                }
            }
            let mut rhs = DVector::zeros(d + k);
            for j in 0..d {
                rhs[j] = -grad[j];
            }
            let solved = kkt.lu().solve(&rhs).ok_or_else(|| {
                Error::Solver("singular KKT system in active-set iteration".into())
            })?;
            let step = solved.rows(0, d).into_owned();
            let mult: Vec<f64> = (0..k).map(|wi| solved[d + wi]).collect();
            (step, mult)
        };

        let scale = 1.0 + z.amax();
        if step.amax() <= STEP_TOL * scale {
            // Stationary on the working set; check multipliers.
            let (worst_idx, worst) =
                mult.iter().enumerate().fold((usize::MAX, f64::INFINITY), |acc, (i, &l)| {
                    if l < acc.1 {
                        (i, l)
                    } else {
                        acc
                    }
                });
            if worst >= -MULT_TOL {
                for (wi, &ri) in working.iter().enumerate() {
                    lambda[ri] = mult[wi].max(0.0);
                }
                return Ok(ActiveSetResult { z, lambda, iterations: iter });
            }
            working.remove(worst_idx);
            continue;
        }

        // Ratio test against rows outside the working set.
        let mut alpha = 1.0f64;
        let mut blocker: Option<usize> = None;
        for i in 0..p.rows.len() {
            if working.contains(&i) {
                continue;
            }
            let dir = p.rows[i].0.dot(&step.transpose());
            if dir > 1e-14 * (1.0 + step.amax()) {
                let room = -p.residual(i, &z);
                let ai = (room / dir).max(0.0);
                if ai < alpha {
                    alpha = ai;
                    blocker = Some(i);
                }
            }
        }
        z += step * alpha;
        if let Some(b) = blocker {
            working.push(b);
        }
    }
    Err(Error::Solver(format!("active-set did not converge in {max_iter} iterations")))
}

/// Assemble generic rows for the main problem: user rows first, then box
/// uppers and lowers on the control variables.
fn main_rows(problem: &CbfQpProblem, with_slack: bool) -> Vec<(RowDVector<f64>, f64)> {
    let m = problem.u_nominal.len();
    let d = if with_slack { m + 1 } else { m };
    let mut rows = Vec::with_capacity(problem.rows.len() + 2 * m);
    for r in &problem.rows {
        let mut a = RowDVector::zeros(d);
        for j in 0..m {
            a[j] = r.a[j];
        }
        if with_slack {
            a[m] = r.c;
        }
        rows.push((a, -r.b));
    }
    for j in 0..m {
        if problem.u_upper[j].is_finite() {
            let mut a = RowDVector::zeros(d);
            a[j] = 1.0;
            rows.push((a, problem.u_upper[j]));
        }
        if problem.u_lower[j].is_finite() {
            let mut a = RowDVector::zeros(d);
            a[j] = -1.0;
            rows.push((a, -problem.u_lower[j]));
        }
    }
    rows
}

fn clamp_to_box(problem: &CbfQpProblem) -> DVector<f64> {
    let mut u = problem.u_nominal.clone();
    for j in 0..u.len() {
        u[j] = u[j].clamp(problem.u_lower[j], problem.u_upper[j]);
    }
    u
}

/// Minimize (approximately) the maximum hard-row violation inside the box:
/// min t s.t. A_i u + b_i <= t, lightly regularized to keep the
/// active-set objective strictly convex. Returns (u, true violation at u).
fn minimax_violation(problem: &CbfQpProblem) -> Result<(DVector<f64>, f64, usize)> {
    const REG_U: f64 = 1e-3;
    const REG_T: f64 = 1e-6;
    let m = problem.u_nominal.len();
    let d = m + 1;
    let u_c = clamp_to_box(problem);

    let mut h = DVector::from_element(d, REG_U);
    h[m] = REG_T;
    let mut g = DVector::zeros(d);
    for j in 0..m {
        g[j] = -REG_U * u_c[j];
    }
    g[m] = 1.0;

    let mut rows = Vec::new();
    for r in problem.rows.iter().filter(|r| r.c == 0.0) {
        let mut a = RowDVector::zeros(d);
        for j in 0..m {
            a[j] = r.a[j];
        }
        a[m] = -1.0;
        rows.push((a, -r.b));
    }
    for j in 0..m {
        if problem.u_upper[j].is_finite() {
            let mut a = RowDVector::zeros(d);
            a[j] = 1.0;
            rows.push((a, problem.u_upper[j]));
        }
        if problem.u_lower[j].is_finite() {
            let mut a = RowDVector::zeros(d);
            a[j] = -1.0;
            rows.push((a, -problem.u_lower[j]));
        }
    }

    let mut z0 = DVector::zeros(d);
    let mut worst = 0.0f64;
    for r in problem.rows.iter().filter(|r| r.c == 0.0) {
        worst = worst.max(r.residual(&u_c, 0.0));
    }
    for j in 0..m {
        z0[j] = u_c[j];
    }
    z0[m] = worst + 1.0;

    let dense = Dense { h, g, rows };
    let result = active_set(&dense, z0, 400)?;
    let u = result.z.rows(0, m).into_owned();
    let mut t = 0.0f64;
    for r in problem.rows.iter().filter(|r| r.c == 0.0) {
        t = t.max(r.residual(&u, 0.0));
    }
    Ok((u, t, result.iterations))
}

/// KKT residual of a candidate solution for the main problem.
fn kkt_residual(
    problem: &CbfQpProblem,
    rows: &[(RowDVector<f64>, f64)],
    z: &DVector<f64>,
    lambda: &[f64],
    with_slack: bool,
) -> f64 {
    let m = problem.u_nominal.len();
    let d = z.len();
    let mut stationarity = DVector::zeros(d);
    for j in 0..m {
        stationarity[j] = z[j] - problem.u_nominal[j];
    }
    if with_slack {
        stationarity[m] = problem.slack_weight * z[m];
    }
    for (i, (a, _)) in rows.iter().enumerate() {
        for j in 0..d {
            stationarity[j] += lambda[i] * a[j];
        }
    }
    let mut worst = stationarity.amax();
    for (i, (a, rhs)) in rows.iter().enumerate() {
        let res = a.dot(&z.transpose()) - rhs;
        worst = worst.max(res); // primal feasibility
        worst = worst.max((lambda[i] * res).abs()); // complementarity
        worst = worst.max(-lambda[i]); // dual feasibility
    }
    worst
}

/// Solve a CBF-QP. Returns the unique minimizer when the hard rows admit
/// one inside the box; otherwise flags infeasibility and returns the
/// minimum-violation control.
pub fn solve_cbf_qp(problem: &CbfQpProblem) -> Result<QpSolution> {
    problem.validate()?;
    let m = problem.u_nominal.len();
    let with_slack = problem.has_slack();

    // Cheap feasible start: the clamped nominal, if it satisfies the rows.
    let u_c = clamp_to_box(problem);
    let hard_ok = |u: &DVector<f64>| {
        problem.rows.iter().filter(|r| r.c == 0.0).all(|r| r.residual(u, 0.0) <= FEAS_TOL)
    };

    let (start_u, phase1_iters, infeasible, max_violation) = if hard_ok(&u_c) {
        (u_c, 0, false, 0.0)
    } else {
        let (u1, t, iters) = minimax_violation(problem)?;
        if t <= FEAS_TOL {
            (u1, iters, false, 0.0)
        } else {
            (u1, iters, true, t)
        }
    };

    if infeasible {
        return Ok(QpSolution {
            u: start_u,
            slack: 0.0,
            status: QpStatus::Infeasible,
            row_multipliers: vec![0.0; problem.rows.len()],
            kkt_residual: f64::NAN,
            max_violation,
            iterations: phase1_iters,
        });
    }

    let d = if with_slack { m + 1 } else { m };
    let mut h = DVector::from_element(d, 1.0);
    let mut g = DVector::zeros(d);
    for j in 0..m {
        g[j] = -problem.u_nominal[j];
    }
    if with_slack {
        h[m] = problem.slack_weight;
    }
    let rows = main_rows(problem, with_slack);

    let mut z0 = DVector::zeros(d);
    for j in 0..m {
        z0[j] = start_u[j];
    }
    if with_slack {
        // Smallest slack satisfying every soft row at the start point.
        let mut lo = 0.0f64;
        let mut hi = f64::INFINITY;
        for r in problem.rows.iter().filter(|r| r.c != 0.0) {
            let base = r.residual(&start_u, 0.0);
            if r.c < 0.0 {
                lo = lo.max(base / -r.c);
            } else {
                hi = hi.min(-base / r.c);
            }
        }
        if lo > hi + FEAS_TOL {
            // Mixed-sign slack coefficients with no common slack value.
            return Ok(QpSolution {
                u: start_u,
                slack: 0.0,
                status: QpStatus::Infeasible,
                row_multipliers: vec![0.0; problem.rows.len()],
                kkt_residual: f64::NAN,
                max_violation: lo - hi,
                iterations: phase1_iters,
            });
        }
        z0[m] = lo + 1e-12;
    }

    let dense = Dense { h, g, rows: rows.clone() };
    let result = active_set(&dense, z0, 600)?;
    let u = result.z.rows(0, m).into_owned();
    let slack = if with_slack { result.z[m] } else { 0.0 };
    let kkt = kkt_residual(problem, &rows, &result.z, &result.lambda, with_slack);
    let mut max_violation = 0.0f64;
    for r in problem.rows.iter().filter(|r| r.c == 0.0) {
        max_violation = max_violation.max(r.residual(&u, 0.0));
    }
    Ok(QpSolution {
        u,
        slack,
        status: QpStatus::Optimal,
        row_multipliers: result.lambda[..problem.rows.len()].to_vec(),
        kkt_residual: kkt,
        max_violation,
        iterations: phase1_iters + result.iterations,
    })
}
