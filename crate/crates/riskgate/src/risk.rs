//! Closed-form finite-time risk bounds for barrier-certified stochastic
//! systems: the martingale-based S-CBF bound, the level-crossing RA-CBF
//! admissible interval and budget function h, the tightness threshold on
//! the barrier-space noise strength, the cascaded sub-level-set bound, and
//! the Wiener supremum law they all rest on.
//!
//! All probabilities returned by this module lie in [0, 1]; clamping is
//! reported in the result types and logged, never silent.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::{erf, erf_inv};

/// Parameters of a single-level risk-aware constraint.
///
/// `gamma` bounds the initial barrier value, `eta` is the supremum of
/// ||L_sigma B|| over the safe set, `t_horizon` the interval length, and
/// `rho_d` the designer-chosen risk budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskParams {
    pub gamma: f64,
    pub eta: f64,
    pub t_horizon: f64,
    pub rho_d: f64,
}

impl RiskParams {
    pub fn new(gamma: f64, eta: f64, t_horizon: f64, rho_d: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Contract(format!("gamma must be in [0,1], got {gamma}")));
        }
        if eta < 0.0 || !eta.is_finite() {
            return Err(Error::Contract(format!("eta must be >= 0, got {eta}")));
        }
        if t_horizon <= 0.0 {
            return Err(Error::Contract(format!("T must be > 0, got {t_horizon}")));
        }
        if !(0.0..=1.0).contains(&rho_d) {
            return Err(Error::Contract(format!("rho_d must be in [0,1], got {rho_d}")));
        }
        Ok(Self { gamma, eta, t_horizon, rho_d })
    }

    /// Checks `rho_d` against the admissible interval for a level gap
    /// (defaults to 1 - gamma when `gap` is `None`).
    pub fn check_admissible(&self, gap: Option<f64>) -> Result<()> {
        let gap = gap.unwrap_or(1.0 - self.gamma);
        let min = min_risk_for_gap(gap, self.eta, self.t_horizon)?;
        if self.rho_d < min {
            return Err(Error::Inadmissible(format!(
                "rho_d = {} is below the admissible minimum {:.6e} for gap {}, eta {}, T {}",
                self.rho_d, min, gap, self.eta, self.t_horizon
            )));
        }
        Ok(())
    }
}

/// Cascade of sub-level sets gamma = mu_0 < mu_1 < ... < mu_k = 1 with
/// per-level noise strengths and risk budgets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeSpec {
    /// Full ascending level list, including mu_0 = gamma and mu_k = 1.
    pub levels: Vec<f64>,
    /// eta_i over each sub-level set, one per gap (len = levels.len() - 1).
    pub etas: Vec<f64>,
    /// Designer risk budget per level crossing (len = levels.len() - 1).
    pub rho_d: Vec<f64>,
    pub t_horizon: f64,
}

impl CascadeSpec {
    pub fn new(levels: Vec<f64>, etas: Vec<f64>, rho_d: Vec<f64>, t_horizon: f64) -> Result<Self> {
        let spec = Self { levels, etas, rho_d, t_horizon };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.levels.len().saturating_sub(1);
        if k < 1 {
            return Err(Error::Contract("cascade needs at least one level gap".into()));
        }
        if !self.levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Contract(format!(
                "cascade levels must be strictly ascending, got {:?}",
                self.levels
            )));
        }
        let last = *self.levels.last().unwrap();
        if (last - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!("cascade must end at mu_k = 1, got {last}")));
        }
        if self.levels[0] < 0.0 {
            return Err(Error::Contract(format!(
                "cascade must start at gamma >= 0, got {}",
                self.levels[0]
            )));
        }
        if self.etas.len() != k || self.rho_d.len() != k {
            return Err(Error::Contract(format!(
                "cascade needs one eta and one rho_d per gap: {} gaps, {} etas, {} rho_d",
                k,
                self.etas.len(),
                self.rho_d.len()
            )));
        }
        if self.t_horizon <= 0.0 {
            return Err(Error::Contract("cascade T must be > 0".into()));
        }
        for (i, &eta) in self.etas.iter().enumerate() {
            if eta <= 0.0 {
                return Err(Error::Contract(format!("eta_{} must be > 0, got {eta}", i + 1)));
            }
        }
        for i in 0..k {
            let gap = self.levels[i + 1] - self.levels[i];
            let min = min_risk_for_gap(gap, self.etas[i], self.t_horizon)?;
            if self.rho_d[i] < min {
                return Err(Error::Inadmissible(format!(
                    "level {}: rho_d = {} below per-level minimum {:.6e} (gap {}, eta {})",
                    i + 1,
                    self.rho_d[i],
                    min,
                    gap,
                    self.etas[i]
                )));
            }
        }
        Ok(())
    }

    /// Number of level gaps k.
    pub fn gap_count(&self) -> usize {
        self.levels.len() - 1
    }
}

/// Which case of the three-branch S-CBF bound was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScbfBranch {
    AlphaGeBeta,
    AlphaLtBeta,
    AlphaZero,
}

/// S-CBF bound value together with branch and clamping information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScbfBound {
    pub value: f64,
    pub branch: ScbfBranch,
    pub clamped: bool,
}

/// Finite-time exit-probability bound certified by an S-CBF with rates
/// (alpha, beta) from an initial barrier level gamma.
pub fn scbf_risk_bound(alpha: f64, beta: f64, gamma: f64, t_horizon: f64) -> ScbfBound {
    debug_assert!(alpha >= 0.0 && beta >= 0.0 && (0.0..=1.0).contains(&gamma) && t_horizon > 0.0);
    let (raw, branch) = if alpha > 0.0 && alpha >= beta {
        (1.0 - (1.0 - gamma) * (-beta * t_horizon).exp(), ScbfBranch::AlphaGeBeta)
    } else if alpha > 0.0 {
        let ebt = (beta * t_horizon).exp();
        ((gamma + (ebt - 1.0) * beta / alpha) / ebt, ScbfBranch::AlphaLtBeta)
    } else {
        (gamma + beta * t_horizon, ScbfBranch::AlphaZero)
    };
    let value = raw.clamp(0.0, 1.0);
    let clamped = value != raw;
    if clamped {
        log::warn!("S-CBF bound {raw} clamped to {value} (branch {branch:?})");
    }
    ScbfBound { value, branch, clamped }
}

/// Smallest admissible risk for crossing a barrier gap under noise
/// strength eta over an interval of length T.
fn min_risk_for_gap(gap: f64, eta: f64, t_horizon: f64) -> Result<f64> {
    if gap < 0.0 {
        return Err(Error::Contract(format!("level gap must be >= 0, got {gap}")));
    }
    if eta == 0.0 {
        // Noiseless limit: the budget interval extends down to zero risk.
        return Ok(0.0);
    }
    Ok(1.0 - erf(gap / (std::f64::consts::SQRT_2 * eta * t_horizon)))
}

/// Lower endpoint of the admissible risk interval for a single-level
/// RA-CBF: 1 - erf((1 - gamma) / (sqrt(2) * eta * T)).
pub fn racbf_min_risk(gamma: f64, eta: f64, t_horizon: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) && gamma != 1.0 {
        return Err(Error::Contract(format!("gamma must be in [0,1], got {gamma}")));
    }
    if eta < 0.0 {
        return Err(Error::Contract(format!("eta must be >= 0, got {eta}")));
    }
    if t_horizon <= 0.0 {
        return Err(Error::Contract(format!("T must be > 0, got {t_horizon}")));
    }
    min_risk_for_gap(1.0 - gamma, eta, t_horizon)
}

/// Remaining expected-growth budget h(I_L) for an RA-CBF constraint.
///
/// `level_gap` defaults to 1 - gamma; cascaded operation passes the
/// occupied level's gap instead. Errors when `rho_d` sits below the
/// admissible minimum for that gap (h would start negative).
pub fn racbf_h(i_l: f64, params: &RiskParams, level_gap: Option<f64>) -> Result<f64> {
    let gap = level_gap.unwrap_or(1.0 - params.gamma);
    params.check_admissible(Some(gap))?;
    let budget = budget_term(params.eta, params.t_horizon, params.rho_d)?;
    Ok(gap - budget - i_l)
}

/// The sqrt(2)*eta*T*erf_inv(1 - rho_d) term shared by h and its tests.
pub fn budget_term(eta: f64, t_horizon: f64, rho_d: f64) -> Result<f64> {
    if rho_d >= 1.0 {
        // erf_inv(0) = 0: the whole gap is spendable.
        return Ok(0.0);
    }
    Ok(std::f64::consts::SQRT_2 * eta * t_horizon * erf_inv(1.0 - rho_d)?)
}

/// Threshold on eta below which the minimal RA-CBF risk beats every
/// S-CBF bound (which can never fall below gamma).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum EtaThreshold {
    /// gamma = 0 edge: erf_inv(1) diverges in the denominator, the
    /// threshold collapses to zero, and no positive noise strength makes
    /// the RA-CBF minimum strictly tighter (an S-CBF can certify zero
    /// risk from gamma = 0 with beta = 0).
    NeverTighter,
    /// RA-CBF is tighter iff eta is strictly below this value.
    Finite(f64),
}

impl EtaThreshold {
    pub fn is_tighter(&self, eta: f64) -> bool {
        match self {
            EtaThreshold::NeverTighter => false,
            EtaThreshold::Finite(v) => eta < *v,
        }
    }
}

/// eta threshold (1 - gamma) / (sqrt(2) * T * erf_inv(1 - gamma)).
///
/// The threshold approaches sqrt(2/pi)/T as gamma -> 1 and 0 as
/// gamma -> 0; the exact gamma = 0 edge is reported as a sentinel so
/// serialized output never carries a float for it.
pub fn theorem3_eta_threshold(gamma: f64, t_horizon: f64) -> Result<EtaThreshold> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Contract(format!("gamma must be in [0,1), got {gamma}")));
    }
    if t_horizon <= 0.0 {
        return Err(Error::Contract(format!("T must be > 0, got {t_horizon}")));
    }
    if gamma == 0.0 {
        return Ok(EtaThreshold::NeverTighter);
    }
    let denom = std::f64::consts::SQRT_2 * t_horizon * erf_inv(1.0 - gamma)?;
    Ok(EtaThreshold::Finite((1.0 - gamma) / denom))
}

/// Per-level minimal crossing risks and their product, the smallest total
/// risk a cascade admits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeBound {
    pub per_level: Vec<f64>,
    pub product: f64,
}

/// Minimal admissible risks for a cascade of sub-level sets.
pub fn cascaded_risk_bound(spec: &CascadeSpec) -> Result<CascadeBound> {
    // rho_d values play no role in the minimal bound; only levels/etas do.
    let k = spec.levels.len().saturating_sub(1);
    if k < 1 || !spec.levels.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Contract(format!(
            "cascade levels must be strictly ascending with k >= 1, got {:?}",
            spec.levels
        )));
    }
    if spec.etas.len() != k {
        return Err(Error::Contract(format!(
            "cascade needs one eta per gap: {} gaps, {} etas",
            k,
            spec.etas.len()
        )));
    }
    let mut per_level = Vec::with_capacity(k);
    let mut product = 1.0;
    for i in 0..k {
        let gap = spec.levels[i + 1] - spec.levels[i];
        let rho = min_risk_for_gap(gap, spec.etas[i], spec.t_horizon)?;
        product *= rho;
        per_level.push(rho);
    }
    Ok(CascadeBound { per_level, product })
}

/// P(sup_{0<=t<=T} w(t) < a) = erf(a / sqrt(2T)) for a standard Wiener
/// process.
pub fn wiener_sup_law(a: f64, t_horizon: f64) -> f64 {
    debug_assert!(a > 0.0 && t_horizon > 0.0);
    erf(a / (2.0 * t_horizon).sqrt())
}
