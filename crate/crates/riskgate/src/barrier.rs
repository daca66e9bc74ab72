//! Barrier functions and their differential operators along an SDE.
//!
//! A barrier B maps the state space to [0, 1); the safe set is {B < 1} and
//! initial states satisfy B <= gamma. The generator of B along the model,
//!
//!   Gamma_B(x, u) = grad B . f(x) + grad B . g(x) u
//!                   + 1/2 Tr(sigma(x)^T hess B(x) sigma(x)),
//!
//! is the expected instantaneous rate of change of B; its affine-in-u
//! split feeds QP constraint rows, and the diffusion Lie derivative
//! L_sigma B = grad B . sigma drives every noise-strength (eta) estimate.
//!
//! Barriers supply analytic gradients and Hessians; the finite-difference
//! evaluators here serve as test oracles and eager validation checks only.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::sde::SdeModel;

/// Analytic evaluators for a scalar barrier function.
pub trait BarrierEval: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> RowDVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Barrier built from three closures; handy for tests and simple shapes.
pub struct ClosureBarrier<V, G, H> {
    value: V,
    gradient: G,
    hessian: H,
}

impl<V, G, H> ClosureBarrier<V, G, H>
where
    V: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> RowDVector<f64> + Send + Sync,
    H: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync,
{
    pub fn new(value: V, gradient: G, hessian: H) -> Self {
        Self { value, gradient, hessian }
    }
}

impl<V, G, H> BarrierEval for ClosureBarrier<V, G, H>
where
    V: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> RowDVector<f64> + Send + Sync,
    H: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync,
{
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> RowDVector<f64> {
        (self.gradient)(x)
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.hessian)(x)
    }
}

/// A named barrier with its initial-set level gamma and sub-level
/// structure mu_0 = gamma < mu_1 < ... < mu_k = 1.
///
/// Single-level operation uses the degenerate list [gamma, 1].
pub struct BarrierSpec {
    name: String,
    gamma: f64,
    levels: Vec<f64>,
    eval: Box<dyn BarrierEval>,
}

impl std::fmt::Debug for BarrierSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BarrierSpec")
            .field("name", &self.name)
            .field("gamma", &self.gamma)
            .field("levels", &self.levels)
            .finish()
    }
}

impl BarrierSpec {
    pub fn new(
        name: impl Into<String>,
        gamma: f64,
        levels: Vec<f64>,
        eval: Box<dyn BarrierEval>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Contract(format!("gamma must be in [0,1], got {gamma}")));
        }
        if levels.len() < 2 {
            return Err(Error::Contract("levels must contain at least [gamma, 1]".into()));
        }
        if (levels[0] - gamma).abs() > 1e-12 {
            return Err(Error::Contract(format!(
                "levels must start at gamma = {gamma}, got {}",
                levels[0]
            )));
        }
        if (levels.last().unwrap() - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!(
                "levels must end at 1, got {}",
                levels.last().unwrap()
            )));
        }
        if !levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Contract(format!("levels must be ascending, got {levels:?}")));
        }
        Ok(Self { name: name.into(), gamma, levels, eval })
    }

    pub fn single_level(
        name: impl Into<String>,
        gamma: f64,
        eval: Box<dyn BarrierEval>,
    ) -> Result<Self> {
        Self::new(name, gamma, vec![gamma, 1.0], eval)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Full level list including mu_0 = gamma and mu_k = 1.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Number of level gaps k (1 for single-level barriers).
    pub fn level_count(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.eval.value(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> RowDVector<f64> {
        self.eval.gradient(x)
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.eval.hessian(x)
    }

    /// Occupied level for a barrier value: the smallest i in 1..=k with
    /// b < mu_i (values below gamma stay in level 1; values at or above 1
    /// clamp to k, though such states are already outside the safe set).
    pub fn occupied_level(&self, b: f64) -> usize {
        for i in 1..self.levels.len() {
            if b < self.levels[i] {
                return i;
            }
        }
        self.levels.len() - 1
    }

    /// Gap mu_i - mu_{i-1} of a level index from `occupied_level`.
    pub fn level_gap(&self, level: usize) -> f64 {
        self.levels[level] - self.levels[level - 1]
    }
}

fn check_dims(model: &SdeModel, barrier: &BarrierSpec, x: &DVector<f64>) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::Contract(format!(
            "state has dimension {}, model expects {}",
            x.len(),
            model.state_dim()
        )));
    }
    let g = barrier.gradient(x);
    if g.len() != model.state_dim() {
        return Err(Error::Contract(format!(
            "barrier {} gradient has length {}, state dimension is {}",
            barrier.name(),
            g.len(),
            model.state_dim()
        )));
    }
    Ok(())
}

/// 1/2 Tr(sigma^T H sigma), exploiting zero entries in sigma's columns.
fn half_trace_term(hess: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    let mut support: Vec<(usize, f64)> = Vec::new();
    for j in 0..sigma.ncols() {
        support.clear();
        for r in 0..sigma.nrows() {
            let v = sigma[(r, j)];
            if v != 0.0 {
                support.push((r, v));
            }
        }
        for &(r, vr) in &support {
            for &(c, vc) in &support {
                acc += vr * hess[(r, c)] * vc;
            }
        }
    }
    0.5 * acc
}

/// Affine-in-u split of the generator:
/// drift_part = grad B . f + 1/2 Tr(sigma^T H sigma), control_row = grad B . g.
pub fn generator_decomposition(
    model: &SdeModel,
    barrier: &BarrierSpec,
    x: &DVector<f64>,
) -> Result<(f64, RowDVector<f64>)> {
    check_dims(model, barrier, x)?;
    let grad = barrier.gradient(x);
    let f = model.drift_at(x)?;
    let g = model.control_matrix_at(x)?;
    let sigma = model.diffusion_at(x)?;
    let hess = barrier.hessian(x);
    if hess.nrows() != model.state_dim() || hess.ncols() != model.state_dim() {
        return Err(Error::Contract(format!(
            "barrier {} hessian is {}x{}, state dimension is {}",
            barrier.name(),
            hess.nrows(),
            hess.ncols(),
            model.state_dim()
        )));
    }
    let drift_part = grad.dot(&f.transpose()) + half_trace_term(&hess, &sigma);
    let control_row = grad * g;
    Ok((drift_part, control_row))
}

/// Generator Gamma_B(x, u), assembled from the affine decomposition so the
/// identity Gamma_B = drift_part + control_row . u holds exactly.
pub fn generator(
    model: &SdeModel,
    barrier: &BarrierSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    if u.len() != model.control_dim() {
        return Err(Error::Contract(format!(
            "control has dimension {}, model expects {}",
            u.len(),
            model.control_dim()
        )));
    }
    let (drift_part, control_row) = generator_decomposition(model, barrier, x)?;
    Ok(drift_part + control_row.dot(&u.transpose()))
}

/// Diffusion Lie derivative L_sigma B(x) = grad B(x) . sigma(x), a q-row
/// whose Euclidean norm feeds eta estimation.
pub fn sigma_lie(
    model: &SdeModel,
    barrier: &BarrierSpec,
    x: &DVector<f64>,
) -> Result<RowDVector<f64>> {
    check_dims(model, barrier, x)?;
    let grad = barrier.gradient(x);
    let sigma = model.diffusion_at(x)?;
    Ok(grad * sigma)
}

/// Central finite-difference gradient of the barrier value (test oracle).
pub fn fd_gradient(barrier: &BarrierSpec, x: &DVector<f64>, rel_step: f64) -> RowDVector<f64> {
    let n = x.len();
    let mut out = RowDVector::zeros(n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for i in 0..n {
        let h = rel_step * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        out[i] = (barrier.value(&xp) - barrier.value(&xm)) / (2.0 * h);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    out
}

/// Central finite differences of the analytic gradient (test oracle).
pub fn fd_hessian(barrier: &BarrierSpec, x: &DVector<f64>, rel_step: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut out = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for i in 0..n {
        let h = rel_step * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        let gp = barrier.gradient(&xp);
        let gm = barrier.gradient(&xm);
        for j in 0..n {
            out[(i, j)] = (gp[j] - gm[j]) / (2.0 * h);
        }
        xp[i] = x[i];
        xm[i] = x[i];
    }
    out
}

/// Default relative step for the finite-difference oracles.
pub const FD_STEP: f64 = 5e-6;

/// Mixed-tolerance consistency check of analytic derivatives against the
/// finite-difference oracles, plus Hessian symmetry. Used by tests and the
/// `validate` command; returns the first failing sample with diagnostics.
pub fn check_derivative_consistency(
    barrier: &BarrierSpec,
    samples: &[DVector<f64>],
    tol: f64,
) -> Result<()> {
    for (si, x) in samples.iter().enumerate() {
        let grad = barrier.gradient(x);
        let fd_g = fd_gradient(barrier, x, FD_STEP);
        for i in 0..x.len() {
            let err = (grad[i] - fd_g[i]).abs();
            if err > tol * (1.0 + grad[i].abs()) {
                return Err(Error::Contract(format!(
                    "barrier {}: gradient[{i}] = {} vs finite difference {} (err {err:.3e}) at sample {si}",
                    barrier.name(),
                    grad[i],
                    fd_g[i]
                )));
            }
        }
        let hess = barrier.hessian(x);
        for i in 0..x.len() {
            for j in 0..x.len() {
                let sym = (hess[(i, j)] - hess[(j, i)]).abs();
                if sym > 1e-12 * (1.0 + hess[(i, j)].abs()) {
                    return Err(Error::Contract(format!(
                        "barrier {}: hessian asymmetry at ({i},{j}): {} vs {}",
                        barrier.name(),
                        hess[(i, j)],
                        hess[(j, i)]
                    )));
                }
            }
        }
        let fd_h = fd_hessian(barrier, x, FD_STEP);
        for i in 0..x.len() {
            for j in 0..x.len() {
                let err = (hess[(i, j)] - fd_h[(i, j)]).abs();
                if err > tol * (1.0 + hess[(i, j)].abs()) {
                    return Err(Error::Contract(format!(
                        "barrier {}: hessian[({i},{j})] = {} vs finite difference {} (err {err:.3e}) at sample {si}",
                        barrier.name(),
                        hess[(i, j)],
                        fd_h[(i, j)]
                    )));
                }
            }
        }
    }
    Ok(())
}
