//! Stability-budget arithmetic and the interval constructors built on it.
//!
//! A selection procedure that is `(eta, tau, nu)`-stable can be followed by
//! classical Bonferroni z/t intervals, provided the level is shrunk to
//! `delta * (1 - nu) * exp(-eta)`; the simultaneous miscoverage over the
//! selected coefficients is then at most `delta + tau + nu`.

pub mod orlicz;
pub mod quantile;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PosiError, Result};
use crate::linmodel::{FitResult, ModelSet};

pub use orlicz::OrliczFunction;
pub use quantile::{normal_quantile, t_quantile};

/// `(eta, tau, nu)`: log-likelihood-ratio bound, indistinguishability slack and
/// probability of an atypical input pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityBudget {
    pub eta: f64,
    pub tau: f64,
    pub nu: f64,
}

impl StabilityBudget {
    pub const ZERO: StabilityBudget = StabilityBudget {
        eta: 0.0,
        tau: 0.0,
        nu: 0.0,
    };

    pub fn new(eta: f64, tau: f64, nu: f64) -> Result<Self> {
        let b = Self { eta, tau, nu };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(invalid(format!("eta must be finite and >= 0, got {}", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(invalid(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(invalid(format!("nu must lie in [0, 1], got {}", self.nu)));
        }
        Ok(())
    }

    /// `tau + nu`.
    pub fn slack(&self) -> f64 {
        self.tau + self.nu
    }

    pub fn is_zero(&self) -> bool {
        self.eta == 0.0 && self.tau == 0.0 && self.nu == 0.0
    }
}

/// Split of the miscoverage `alpha = delta + tau + nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelAllocation {
    pub delta: f64,
    pub tau: f64,
    pub nu: f64,
}

impl LevelAllocation {
    pub fn alpha(&self) -> f64 {
        self.delta + self.tau + self.nu
    }

    /// The `delta` a stable selector should be run with so that both of its
    /// certificates fit inside this allocation.
    pub fn selector_delta(&self) -> f64 {
        self.tau.min(self.nu)
    }
}

/// Simultaneous intervals `estimate_j +- K * stderr_j` over a selected model.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    pub model: ModelSet,
    pub estimates: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub k: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl IntervalSet {
    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .collect()
    }

    /// Whether every `targets[j]` lies in the closed interval `j`.
    pub fn covers(&self, targets: &[f64]) -> bool {
        targets.len() == self.lower.len()
            && targets
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *l <= *t && *t <= *u)
    }
}

/// How the noise scale in the standard errors was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceMode {
    KnownSigma,
    EstimatedSigma { dof: u64 },
}

fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// Simple adaptive composition: `k` steps of `(eta, tau)` give `(k eta, k tau)`.
pub fn compose_adaptive_simple(eta_step: f64, tau_step: f64, k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(invalid("composition needs k >= 1"));
    }
    StabilityBudget::new(eta_step, tau_step, 0.0)?;
    let kf = k as f64;
    Ok((kf * eta_step, (kf * tau_step).min(1.0)))
}

/// Advanced adaptive composition: `k eta^2 / 2 + sqrt(2 k ln(1/delta)) eta`.
///
/// The caller adds `delta` (and `k * tau_step`) to the slack.
pub fn compose_adaptive_advanced(eta_step: f64, k: usize, delta: f64) -> Result<f64> {
    if k == 0 {
        return Err(invalid("composition needs k >= 1"));
    }
    check_unit_open("delta", delta)?;
    StabilityBudget::new(eta_step, 0.0, 0.0)?;
    let kf = k as f64;
    Ok(0.5 * kf * eta_step * eta_step + (2.0 * kf * (1.0 / delta).ln()).sqrt() * eta_step)
}

/// Running several selectors on the same data: parameters add up.
pub fn compose_nonadaptive(budgets: &[StabilityBudget]) -> Result<StabilityBudget> {
    if budgets.is_empty() {
        return Err(PosiError::EmptyInput("budget list"));
    }
    let mut acc = StabilityBudget::ZERO;
    for b in budgets {
        b.validate()?;
        acc.eta += b.eta;
        acc.tau += b.tau;
        acc.nu += b.nu;
    }
    acc.tau = acc.tau.min(1.0);
    acc.nu = acc.nu.min(1.0);
    Ok(acc)
}

/// `ln(sum_{k=1}^s C(d, k)) + ln(1/tau)`: the max-information bound that holds
/// for any selection of at most `s` out of `d` features.
pub fn sparse_selection_eta(d: u64, s: u64, tau: f64) -> Result<f64> {
    if s == 0 || s > d {
        return Err(invalid(format!("need 1 <= s <= d, got s = {s}, d = {d}")));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(invalid(format!("tau must lie in (0, 1], got {tau}")));
    }
    // ln C(d, k) by the recurrence C(d, k) = C(d, k-1) (d-k+1) / k.
    let mut log_terms = Vec::with_capacity(s as usize);
    let mut ln_c = 0.0;
    for k in 1..=s {
        ln_c += ((d - k + 1) as f64).ln() - (k as f64).ln();
        log_terms.push(ln_c);
    }
    Ok(log_sum_exp(&log_terms) - tau.ln())
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `delta * (1 - nu) * exp(-eta)`.
pub fn corrected_level(delta: f64, budget: &StabilityBudget) -> f64 {
    delta * (1.0 - budget.nu) * (-budget.eta).exp()
}

/// `ln` of [`corrected_level`], finite for arbitrarily large `eta`.
pub fn ln_corrected_level(delta: f64, budget: &StabilityBudget) -> f64 {
    delta.ln() + (-budget.nu).ln_1p() - budget.eta
}

/// Bonferroni z (or t) constant at the stability-corrected level:
/// the `1 - delta (1 - nu) / (2 |M| e^eta)` quantile.
pub fn posi_constant(
    model_size: usize,
    delta: f64,
    budget: &StabilityBudget,
    mode: VarianceMode,
) -> Result<f64> {
    if model_size == 0 {
        return Err(invalid("posi constant needs a nonempty model"));
    }
    check_unit_open("delta", delta)?;
    budget.validate()?;
    if budget.nu >= 1.0 {
        return Err(PosiError::DegenerateLevel("nu = 1 leaves no coverage".into()));
    }
    let ln_tail = ln_corrected_level(delta, budget) - (2.0 * model_size as f64).ln();
    if !(ln_tail < 0.5_f64.ln()) {
        return Err(PosiError::DegenerateLevel(format!(
            "upper-tail probability exp({ln_tail}) is not below 1/2"
        )));
    }
    let k = match mode {
        VarianceMode::KnownSigma => quantile::normal_upper_quantile_ln(ln_tail),
        VarianceMode::EstimatedSigma { dof } => {
            if dof == 0 {
                return Err(invalid("estimated sigma needs dof >= 1"));
            }
            quantile::t_upper_quantile_ln(ln_tail, dof)
        }
    };
    if k.is_nan() {
        return Err(PosiError::DegenerateLevel(format!(
            "quantile at ln tail {ln_tail} is undefined"
        )));
    }
    Ok(k)
}

/// Smallest PoSI constant over several certificates of the same selector.
///
/// Each certificate is separately valid, so the minimum is too, provided all
/// of them spend the same `tau + nu`.
pub fn best_posi_constant(
    model_size: usize,
    delta: f64,
    candidates: &[StabilityBudget],
    mode: VarianceMode,
) -> Result<(f64, StabilityBudget)> {
    let first = candidates
        .first()
        .ok_or(PosiError::EmptyInput("budget candidates"))?;
    for c in &candidates[1..] {
        if (c.slack() - first.slack()).abs() > 1e-12 {
            return Err(PosiError::MixedSlack {
                first: first.slack(),
                other: c.slack(),
            });
        }
    }
    let mut best: Option<(f64, StabilityBudget)> = None;
    for c in candidates {
        let k = posi_constant(model_size, delta, c, mode)?;
        if best.is_none_or(|(bk, _)| k < bk) {
            best = Some((k, *c));
        }
    }
    Ok(best.expect("nonempty candidates"))
}

/// Splits `alpha` into `(delta, tau, nu)`; equal thirds unless weights are given.
pub fn alpha_split(alpha: f64, weights: Option<[f64; 3]>) -> Result<LevelAllocation> {
    check_unit_open("alpha", alpha)?;
    let w = match weights {
        None => [1.0 / 3.0; 3],
        Some(w) => {
            let sum: f64 = w.iter().sum();
            if w.iter().any(|v| !(*v > 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(PosiError::BadWeights(w));
            }
            w
        }
    };
    Ok(LevelAllocation {
        delta: alpha * w[0],
        tau: alpha * w[1],
        nu: alpha * w[2],
    })
}

/// Raises every candidate's `tau` and `nu` to the largest among them.
///
/// A certificate `(eta, tau, nu)` implies `(eta, tau', nu')` for any
/// `tau' >= tau, nu' >= nu`, so the aligned candidates remain valid and can be
/// compared by [`best_posi_constant`].
pub fn align_slack(candidates: &[StabilityBudget]) -> Vec<StabilityBudget> {
    let tau = candidates.iter().map(|b| b.tau).fold(0.0, f64::max);
    let nu = candidates.iter().map(|b| b.nu).fold(0.0, f64::max);
    candidates
        .iter()
        .map(|b| StabilityBudget { eta: b.eta, tau, nu })
        .collect()
}

/// Aligns the candidates and assigns whatever part of `alpha` they do not
/// spend on slack to the quantile level `delta`.
pub fn allocate_residual(
    alpha: f64,
    candidates: &[StabilityBudget],
) -> Result<(LevelAllocation, Vec<StabilityBudget>)> {
    check_unit_open("alpha", alpha)?;
    if candidates.is_empty() {
        return Err(PosiError::EmptyInput("budget candidates"));
    }
    let aligned = align_slack(candidates);
    let (tau, nu) = (aligned[0].tau, aligned[0].nu);
    let delta = alpha - tau - nu;
    if !(delta > 0.0) {
        return Err(PosiError::DegenerateLevel(format!(
            "budget slack tau + nu = {} leaves nothing of alpha = {alpha}",
            tau + nu
        )));
    }
    Ok((LevelAllocation { delta, tau, nu }, aligned))
}

/// `estimate_j +- K * stderr_j`.
pub fn build_intervals(fit: &FitResult, k: f64) -> Result<IntervalSet> {
    if !(k >= 0.0) {
        return Err(invalid(format!("K must be >= 0, got {k}")));
    }
    let lower = fit
        .coefficients
        .iter()
        .zip(&fit.stderrs)
        .map(|(b, s)| b - k * s)
        .collect();
    let upper = fit
        .coefficients
        .iter()
        .zip(&fit.stderrs)
        .map(|(b, s)| b + k * s)
        .collect();
    Ok(IntervalSet {
        model: fit.model.clone(),
        estimates: fit.coefficients.clone(),
        stderrs: fit.stderrs.clone(),
        k,
        lower,
        upper,
    })
}

/// `psi^{-1}(|M| e^eta / (delta (1 - nu))) * G`; multiply by
/// `sqrt((X_M^T X_M)^{-1}_{jj})` for the half-width of coefficient `j`.
pub fn orlicz_constant(
    psi: &OrliczFunction,
    g: f64,
    model_size: usize,
    delta: f64,
    budget: &StabilityBudget,
) -> Result<f64> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(invalid(format!("Orlicz bound G must be positive, got {g}")));
    }
    if model_size == 0 {
        return Err(invalid("Orlicz constant needs a nonempty model"));
    }
    check_unit_open("delta", delta)?;
    budget.validate()?;
    if budget.nu >= 1.0 {
        return Err(PosiError::DegenerateLevel("nu = 1 leaves no coverage".into()));
    }
    if let OrliczFunction::Custom { name, .. } = psi {
        if !(psi.eval(1.0) > psi.eval(0.0)) {
            return Err(PosiError::UnregisteredOrlicz((*name).to_string()));
        }
    }
    let ln_arg = (model_size as f64).ln() - ln_corrected_level(delta, budget);
    Ok(psi.inverse_ln(ln_arg) * g)
}
