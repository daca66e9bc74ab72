//! Control-affine SDE abstraction and fixed-step Euler-Maruyama
//! integration with stopped-process semantics.
//!
//! Dynamics are dx = (f(x) + g(x) u) dt + sigma(x) dw with state dimension
//! n, control dimension m and noise dimension q. Trials step on a uniform
//! grid, query the controller zero-order-hold at each grid point, and
//! freeze the state at the first grid point where any monitored barrier
//! reaches its boundary (B >= 1).

use nalgebra::{DMatrix, DVector};

use crate::barrier::BarrierSpec;
use crate::error::{Error, Result};
use crate::rng::TrialRng;

type VectorField = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixField = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Control-affine stochastic model: drift f, control matrix g, diffusion
/// sigma, all evaluable over the state space.
pub struct SdeModel {
    n: usize,
    m: usize,
    q: usize,
    drift: VectorField,
    control_matrix: MatrixField,
    diffusion: MatrixField,
}

impl SdeModel {
    pub fn new(
        n: usize,
        m: usize,
        q: usize,
        drift: VectorField,
        control_matrix: MatrixField,
        diffusion: MatrixField,
    ) -> Self {
        Self { n, m, q, drift, control_matrix, diffusion }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn noise_dim(&self) -> usize {
        self.q
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Contract(format!(
                "state has dimension {}, model expects {}",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// Drift f(x); checks dimensional consistency at the evaluation point.
    pub fn drift_at(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state(x)?;
        let f = (self.drift)(x);
        if f.len() != self.n {
            return Err(Error::Contract(format!(
                "drift returned length {}, expected {}",
                f.len(),
                self.n
            )));
        }
        Ok(f)
    }

    /// Control matrix g(x) of shape n x m.
    pub fn control_matrix_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        let g = (self.control_matrix)(x);
        if g.nrows() != self.n || g.ncols() != self.m {
            return Err(Error::Contract(format!(
                "control matrix is {}x{}, expected {}x{}",
                g.nrows(),
                g.ncols(),
                self.n,
                self.m
            )));
        }
        Ok(g)
    }

    /// Diffusion sigma(x) of shape n x q.
    pub fn diffusion_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        let s = (self.diffusion)(x);
        if s.nrows() != self.n || s.ncols() != self.q {
            return Err(Error::Contract(format!(
                "diffusion is {}x{}, expected {}x{}",
                s.nrows(),
                s.ncols(),
                self.n,
                self.q
            )));
        }
        Ok(s)
    }
}

impl std::fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeModel")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("q", &self.q)
            .finish()
    }
}

fn integration_fault(what: &'static str, t: f64, x: &DVector<f64>) -> Error {
    Error::IntegrationFault { what, t, state: x.iter().copied().collect() }
}

/// One Euler-Maruyama step: x + (f(x) + g(x) u) dt + sigma(x) sqrt(dt) xi.
///
/// `xi` must hold q i.i.d. standard normal draws. Non-finite model output
/// raises an integration fault carrying the offending state.
pub fn euler_maruyama_step(
    model: &SdeModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    xi: &DVector<f64>,
) -> Result<DVector<f64>> {
    if dt <= 0.0 {
        return Err(Error::Precondition(format!("dt must be > 0, got {dt}")));
    }
    if u.len() != model.m {
        return Err(Error::Contract(format!(
            "control has dimension {}, model expects {}",
            u.len(),
            model.m
        )));
    }
    if xi.len() != model.q {
        return Err(Error::Contract(format!(
            "noise draw has dimension {}, model expects {}",
            xi.len(),
            model.q
        )));
    }
    let f = model.drift_at(x)?;
    if !f.iter().all(|v| v.is_finite()) {
        return Err(integration_fault("drift", f64::NAN, x));
    }
    let g = model.control_matrix_at(x)?;
    if !g.iter().all(|v| v.is_finite()) {
        return Err(integration_fault("control matrix", f64::NAN, x));
    }
    let s = model.diffusion_at(x)?;
    if !s.iter().all(|v| v.is_finite()) {
        return Err(integration_fault("diffusion", f64::NAN, x));
    }
    let mut next = x + (f + &g * u) * dt + (s * xi) * dt.sqrt();
    // Normalize negative zeros so records are bitwise reproducible across
    // algebraically equivalent compilations.
    for v in next.iter_mut() {
        if *v == 0.0 {
            *v = 0.0;
        }
    }
    Ok(next)
}

/// Controller output for one grid point.
#[derive(Debug, Clone)]
pub struct ControlStep {
    pub u: DVector<f64>,
    /// True when the safety QP was infeasible and `u` is the recorded
    /// minimum-violation fallback.
    pub infeasible: bool,
    /// Slack value used by soft constraint rows (0 when all rows hard).
    pub slack: f64,
}

impl ControlStep {
    pub fn feasible(u: DVector<f64>) -> Self {
        Self { u, infeasible: false, slack: 0.0 }
    }
}

/// State-feedback control law queried zero-order-hold at each grid point.
pub trait Controller {
    fn control(&mut self, t: f64, x: &DVector<f64>) -> Result<ControlStep>;

    /// Called once per step after the control has been applied, with the
    /// state at which it was chosen (left endpoint).
    fn post_step(&mut self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>, _dt: f64) -> Result<()> {
        Ok(())
    }
}

/// Plain closures act as memoryless controllers.
impl<F> Controller for F
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    fn control(&mut self, t: f64, x: &DVector<f64>) -> Result<ControlStep> {
        Ok(ControlStep::feasible(self(t, x)))
    }
}

/// Full record of one simulated trial on the uniform grid.
///
/// After the exit time tau the state samples repeat the exit state and the
/// control rows are zero (the stopped process applies no control).
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub barrier_names: Vec<String>,
    /// Barrier values per barrier per grid point.
    pub barrier_values: Vec<Vec<f64>>,
    /// Running integral of the generator along the realized path, per
    /// barrier per grid point (cumulative; never reset).
    pub integrated_generator: Vec<Vec<f64>>,
    pub stopped: bool,
    /// First exit time, if the trial left the safe set.
    pub tau: Option<f64>,
    /// Grid indices at which the controller reported infeasibility.
    pub infeasible_steps: Vec<usize>,
    pub seed: u64,
}

impl TrajectoryRecord {
    /// Maximum barrier value over the trial for barrier index `b`.
    pub fn max_barrier(&self, b: usize) -> f64 {
        self.barrier_values[b].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Terminal (possibly frozen) state.
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("record has at least the initial state")
    }

    /// CSV export: `t, x_0.., u_0.., B_<name>.., stopped, tau`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        let n = self.states[0].len();
        let m = self.controls[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x_{i}")));
        header.extend((0..m).map(|i| format!("u_{i}")));
        header.extend(self.barrier_names.iter().map(|b| format!("B_{b}")));
        header.push("stopped".into());
        header.push("tau".into());
        writeln!(w, "{}", header.join(","))?;
        let tau_str = self.tau.map(|t| t.to_string()).unwrap_or_default();
        for k in 0..self.times.len() {
            let mut row = vec![self.times[k].to_string()];
            row.extend(self.states[k].iter().map(|v| v.to_string()));
            row.extend(self.controls[k].iter().map(|v| v.to_string()));
            for b in 0..self.barrier_names.len() {
                row.push(self.barrier_values[b][k].to_string());
            }
            let frozen = self.tau.map(|tau| self.times[k] >= tau).unwrap_or(false);
            row.push(if frozen { "1" } else { "0" }.into());
            row.push(tau_str.clone());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Number of grid steps for a horizon/dt pair, validating divisibility.
pub fn grid_steps(t_horizon: f64, dt: f64) -> Result<usize> {
    if dt <= 0.0 || t_horizon < dt {
        return Err(Error::Precondition(format!(
            "need 0 < dt <= T, got dt = {dt}, T = {t_horizon}"
        )));
    }
    let steps = (t_horizon / dt).round();
    if (steps * dt - t_horizon).abs() > 1e-9 * t_horizon.max(1.0) {
        return Err(Error::Precondition(format!(
            "T = {t_horizon} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(steps as usize)
}

/// Simulate one trial: step the model under the controller, monitor all
/// barriers at grid points, and freeze on first exit. Identical inputs and
/// seed yield a bit-identical record regardless of scheduling.
pub fn simulate_trial(
    model: &SdeModel,
    controller: &mut dyn Controller,
    barriers: &[BarrierSpec],
    x0: &DVector<f64>,
    t_horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    let steps = grid_steps(t_horizon, dt)?;
    model.check_state(x0)?;
    for b in barriers {
        let v = b.value(x0);
        if v >= 1.0 {
            return Err(Error::Precondition(format!(
                "barrier {} already at B(x0) = {v} >= 1",
                b.name()
            )));
        }
    }

    let rng = TrialRng::new(seed);
    let nb = barriers.len();
    let mut record = TrajectoryRecord {
        dt,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        barrier_names: barriers.iter().map(|b| b.name().to_string()).collect(),
        barrier_values: vec![Vec::with_capacity(steps + 1); nb],
        integrated_generator: vec![Vec::with_capacity(steps + 1); nb],
        stopped: false,
        tau: None,
        infeasible_steps: Vec::new(),
        seed,
    };

    let mut x = x0.clone();
    record.times.push(0.0);
    record.states.push(x.clone());
    for (i, b) in barriers.iter().enumerate() {
        record.barrier_values[i].push(b.value(&x));
        record.integrated_generator[i].push(0.0);
    }

    let mut xi = DVector::zeros(model.q);
    for k in 0..steps {
        let t = k as f64 * dt;
        let step = controller.control(t, &x)?;
        if step.infeasible {
            record.infeasible_steps.push(k);
        }
        record.controls.push(step.u.clone());

        for (c, v) in xi.iter_mut().enumerate() {
            *v = rng.normal(k as u64, c as u64);
        }
        let next = euler_maruyama_step(model, &x, &step.u, dt, &xi)
            .map_err(|e| match e {
                Error::IntegrationFault { what, state, .. } => {
                    Error::IntegrationFault { what, t, state }
                }
                other => other,
            })?;
        controller.post_step(t, &x, &step.u, dt)?;

        // Cumulative generator integral along the realized path
        // (left-endpoint rule, matching the filter's ledger).
        for (i, b) in barriers.iter().enumerate() {
            let g = crate::barrier::generator(model, b, &x, &step.u)?;
            let prev = *record.integrated_generator[i].last().unwrap();
            record.integrated_generator[i].push(prev + g * dt);
        }

        x = next;
        let t_next = (k + 1) as f64 * dt;
        record.times.push(t_next);
        record.states.push(x.clone());
        let mut exited = false;
        for (i, b) in barriers.iter().enumerate() {
            let v = b.value(&x);
            record.barrier_values[i].push(v);
            if v >= 1.0 {
                exited = true;
            }
        }
        if exited {
            record.stopped = true;
            record.tau = Some(t_next);
            break;
        }
    }

    // Freeze the stopped process on the remainder of the grid.
    if record.stopped {
        let exit_state = record.states.last().unwrap().clone();
        let frozen_b: Vec<f64> =
            (0..nb).map(|i| *record.barrier_values[i].last().unwrap()).collect();
        let frozen_il: Vec<f64> =
            (0..nb).map(|i| *record.integrated_generator[i].last().unwrap()).collect();
        while record.times.len() < steps + 1 {
            let k = record.times.len();
            record.times.push(k as f64 * dt);
            record.states.push(exit_state.clone());
            record.controls.push(DVector::zeros(model.m));
            for i in 0..nb {
                record.barrier_values[i].push(frozen_b[i]);
                record.integrated_generator[i].push(frozen_il[i]);
            }
        }
    }
    // Controls align with grid points; the terminal point applies none.
    record.controls.push(DVector::zeros(model.m));
    debug_assert_eq!(record.controls.len(), record.times.len());
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{BarrierSpec, ClosureBarrier};
    use nalgebra::{dmatrix, dvector};

    fn zero_model() -> SdeModel {
        SdeModel::new(
            2,
            2,
            2,
            Box::new(|_x| DVector::zeros(2)),
            Box::new(|_x| DMatrix::zeros(2, 2)),
            Box::new(|_x| DMatrix::zeros(2, 2)),
        )
    }

    fn single_integrator(sigma: f64) -> SdeModel {
        SdeModel::new(
            2,
            2,
            2,
            Box::new(|_x| DVector::zeros(2)),
            Box::new(|_x| DMatrix::identity(2, 2)),
            Box::new(move |_x| DMatrix::from_diagonal(&dvector![sigma, sigma])),
        )
    }

    fn disk_barrier() -> BarrierSpec {
        BarrierSpec::single_level(
            "disk",
            0.5,
            Box::new(ClosureBarrier::new(
                |x: &DVector<f64>| x[0] * x[0] + x[1] * x[1],
                |x| nalgebra::RowDVector::from_vec(vec![2.0 * x[0], 2.0 * x[1]]),
                |_x| 2.0 * DMatrix::identity(2, 2),
            )),
        )
        .unwrap()
    }

    #[test]
    fn zero_dynamics_leave_state_unchanged() {
        let model = zero_model();
        let x = dvector![0.3, -0.7];
        let next = euler_maruyama_step(&model, &x, &dvector![1.0, 1.0], 0.001, &dvector![1.0, 1.0])
            .unwrap();
        assert_eq!(next, x);
    }

    #[test]
    fn deterministic_euler_step() {
        let model = single_integrator(0.0);
        let next = euler_maruyama_step(
            &model,
            &dvector![0.0, 0.0],
            &dvector![1.0, 0.0],
            0.1,
            &dvector![0.0, 0.0],
        )
        .unwrap();
        assert!((next[0] - 0.1).abs() < 1e-15);
        assert_eq!(next[1], 0.0);
    }

    #[test]
    fn noise_only_step_matches_formula() {
        let model = single_integrator(0.003);
        let next = euler_maruyama_step(
            &model,
            &dvector![0.0, 0.0],
            &dvector![0.0, 0.0],
            0.001,
            &dvector![1.0, 1.0],
        )
        .unwrap();
        let expected = 0.003 * 0.001f64.sqrt(); // 9.4868...e-5
        assert!((next[0] - expected).abs() < 1e-18);
        assert!((next[1] - expected).abs() < 1e-18);
        assert!((expected - 9.486832980505138e-5).abs() < 1e-18);
    }

    #[test]
    fn non_finite_drift_is_an_integration_fault() {
        let model = SdeModel::new(
            1,
            1,
            1,
            Box::new(|x: &DVector<f64>| dvector![1.0 / (x[0] - x[0])]),
            Box::new(|_| DMatrix::zeros(1, 1)),
            Box::new(|_| DMatrix::zeros(1, 1)),
        );
        let err = euler_maruyama_step(&model, &dvector![1.0], &dvector![0.0], 0.1, &dvector![0.0]);
        assert!(matches!(err, Err(Error::IntegrationFault { what: "drift", .. })));
    }

    #[test]
    fn dimension_mismatch_is_a_contract_violation() {
        let model = single_integrator(0.0);
        let err =
            euler_maruyama_step(&model, &dvector![0.0, 0.0, 0.0], &dvector![0.0, 0.0], 0.1, &dvector![0.0, 0.0]);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn deterministic_safe_run_never_stops() {
        // Goal-seeking toward a point inside S.
        let model = single_integrator(0.0);
        let barriers = [disk_barrier()];
        let mut controller =
            |_t: f64, x: &DVector<f64>| dvector![-(x[0] - 0.2), -(x[1] - 0.2)];
        let record = simulate_trial(
            &model,
            &mut controller,
            &barriers,
            &dvector![std::f64::consts::FRAC_1_SQRT_2, 0.0],
            1.0,
            0.001,
            7,
        )
        .unwrap();
        assert!(!record.stopped);
        assert_eq!(record.tau, None);
        assert_eq!(record.times.len(), 1001);
    }

    #[test]
    fn boundary_crossing_time_matches_analytic_value() {
        // Constant unit radial speed from B(x0) = 0.5: crossing at
        // t* = 1 - 1/sqrt(2) along the x axis.
        let model = single_integrator(0.0);
        let barriers = [disk_barrier()];
        let mut controller = |_t: f64, _x: &DVector<f64>| dvector![1.0, 0.0];
        let dt = 0.001;
        let record = simulate_trial(
            &model,
            &mut controller,
            &barriers,
            &dvector![std::f64::consts::FRAC_1_SQRT_2, 0.0],
            1.0,
            dt,
            7,
        )
        .unwrap();
        assert!(record.stopped);
        let analytic = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
        let tau = record.tau.unwrap();
        assert!(
            (tau - analytic).abs() <= dt + 1e-12,
            "tau {tau} vs analytic {analytic}"
        );
        // Frozen tail: every post-tau state equals the exit state.
        let exit_idx = (tau / dt).round() as usize;
        for k in exit_idx..record.states.len() {
            assert_eq!(record.states[k], record.states[exit_idx]);
        }
        assert_eq!(record.times.len(), 1001);
    }

    #[test]
    fn identical_seeds_give_bit_identical_records() {
        let model = single_integrator(0.01);
        let barriers = [disk_barrier()];
        let run = |seed| {
            let mut controller = |_t: f64, x: &DVector<f64>| dvector![-x[0], -x[1]];
            simulate_trial(
                &model,
                &mut controller,
                &barriers,
                &dvector![0.5, 0.0],
                0.5,
                0.001,
                seed,
            )
            .unwrap()
        };
        let a = run(42);
        let b = run(42);
        let c = run(43);
        for k in 0..a.states.len() {
            assert_eq!(a.states[k], b.states[k]);
        }
        assert_eq!(a.barrier_values, b.barrier_values);
        assert!(a.states.iter().zip(&c.states).any(|(x, y)| x != y));
    }

    #[test]
    fn precondition_rejects_start_outside_safe_set() {
        let model = single_integrator(0.0);
        let barriers = [disk_barrier()];
        let mut controller = |_t: f64, _x: &DVector<f64>| dvector![0.0, 0.0];
        let err = simulate_trial(
            &model,
            &mut controller,
            &barriers,
            &dvector![1.5, 0.0],
            1.0,
            0.001,
            7,
        );
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn halving_dt_changes_deterministic_terminal_state_by_o_dt() {
        let model = single_integrator(0.0);
        let barriers = [disk_barrier()];
        let run = |dt: f64| {
            let mut controller =
                |_t: f64, x: &DVector<f64>| dvector![-(x[0] - 0.3) * 2.0, -(x[1] + 0.1) * 2.0];
            simulate_trial(&model, &mut controller, &barriers, &dvector![0.5, 0.2], 1.0, dt, 3)
                .unwrap()
                .final_state()
                .clone()
        };
        let coarse = run(0.01);
        let half = run(0.005);
        let quarter = run(0.0025);
        let d1 = (coarse - &half).norm();
        let d2 = (half - quarter).norm();
        // First-order scheme: successive differences shrink ~2x.
        assert!(d2 < 0.75 * d1, "d1 = {d1}, d2 = {d2}");
    }

    #[test]
    fn noise_increment_statistics() {
        // Mean within 4 SE of 0, variance within 2% of sigma^2 dt.
        let sigma = 0.003;
        let dt = 0.001;
        let model = single_integrator(sigma);
        let mut controller = |_t: f64, _x: &DVector<f64>| dvector![0.0, 0.0];
        let barriers: [BarrierSpec; 0] = [];
        let mut count = 0usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for trial in 0..120 {
            let record = simulate_trial(
                &model,
                &mut controller,
                &barriers,
                &dvector![0.0, 0.0],
                1.0,
                dt,
                crate::rng::derive_trial_seed(99, trial),
            )
            .unwrap();
            for k in 1..record.states.len() {
                for c in 0..2 {
                    let inc = record.states[k][c] - record.states[k - 1][c];
                    sum += inc;
                    sumsq += inc * inc;
                    count += 1;
                }
            }
        }
        assert!(count >= 100_000);
        let mean = sum / count as f64;
        let var = sumsq / count as f64 - mean * mean;
        let target_var = sigma * sigma * dt;
        let se = (target_var / count as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "mean {mean}, se {se}");
        assert!((var / target_var - 1.0).abs() < 0.02, "var ratio {}", var / target_var);
    }

    #[test]
    fn csv_export_layout() {
        let model = single_integrator(0.0);
        let barriers = [disk_barrier()];
        let mut controller = |_t: f64, _x: &DVector<f64>| dvector![1.0, 0.0];
        let record = simulate_trial(
            &model,
            &mut controller,
            &barriers,
            &dvector![0.1, 0.0],
            0.01,
            0.001,
            1,
        )
        .unwrap();
        let mut buf = Vec::new();
        record.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x_0,x_1,u_0,u_1,B_disk,stopped,tau");
        assert_eq!(lines.count(), 11);
    }

    #[test]
    fn grid_steps_validation() {
        assert_eq!(grid_steps(1.0, 0.001).unwrap(), 1000);
        assert!(grid_steps(1.0, 0.0003).is_err());
        assert!(grid_steps(0.0, 0.001).is_err());
        let _ = dmatrix![1.0, 0.0; 0.0, 1.0]; // keep the macro import exercised
    }
}
