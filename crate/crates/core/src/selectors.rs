//! Model selection: Frank–Wolfe LASSO, marginal screening and forward
//! stepwise, each in an exact and a Laplace-randomized (stable) form.
//!
//! The exact selectors are the stable ones run at noise scale zero, so both
//! share one code path and one tie rule: the lowest index wins.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PosiError, Result};
use crate::linmodel::{check_len, DesignMatrix, ModelSet, OrthoBasis, SubmodelQr};
use crate::noise::{self, laplace_sample, NoiseFamily, NoisePolicy, RngStream};
use crate::stability::{compose_adaptive_advanced, StabilityBudget};

/// Default threshold below which a LASSO coefficient counts as zero.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

/// Relative residual norm below which a forward-stepwise candidate is
/// considered collinear with the selected columns.
pub const COLLINEAR_TOL: f64 = 1e-10;

/// Upper limit on the default number of Frank–Wolfe steps.
pub const MAX_DEFAULT_STEPS: usize = 10_000;

/// One round of a selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// For LASSO the vertex index (`2i` is `+C1 e_i`, `2i+1` is `-C1 e_i`),
    /// otherwise the feature index.
    pub chosen: usize,
    /// Noiseless scores, one per candidate (NaN for candidates not in play).
    pub scores: Vec<f64>,
    /// Scores with the Laplace noise added.
    pub noisy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub model: ModelSet,
    /// Features in the order they were picked (LASSO: order of first visit).
    pub order: Vec<usize>,
    /// Final Frank–Wolfe iterate; LASSO only.
    pub theta: Option<Vec<f64>>,
    pub trace: Vec<TraceStep>,
    /// Laplace scale used for every draw.
    pub noise_scale: f64,
    /// Certificates `(k eta^2/2 + sqrt(2k ln(1/delta)) eta, delta, delta)` and
    /// `(k eta, 0, delta)`. Empty when the selector ran at an explicit scale.
    pub budgets: Vec<StabilityBudget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoConfig {
    /// Radius of the l1 ball.
    pub c1: f64,
    pub steps: usize,
    pub policy: NoisePolicy,
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0) || !self.c1.is_finite() {
            return Err(invalid(format!("C1 must be positive, got {}", self.c1)));
        }
        if self.steps == 0 {
            return Err(invalid("LASSO needs at least one step"));
        }
        self.policy.validate()
    }
}

/// Both composed certificates for `k` rounds at per-round `eta_step`.
pub fn certify_budgets(k: usize, eta_step: f64, delta: f64) -> Result<Vec<StabilityBudget>> {
    let advanced = compose_adaptive_advanced(eta_step, k, delta)?;
    Ok(vec![
        StabilityBudget::new(advanced, delta, delta)?,
        StabilityBudget::new(k as f64 * eta_step, 0.0, delta)?,
    ])
}

/// Largest per-round `eta` whose better certificate over `k` rounds spends at
/// most `total`.
pub fn eta_step_for_total(k: usize, delta: f64, total: f64) -> Result<f64> {
    if k == 0 || !(total > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("need k >= 1, total > 0 and delta in (0, 1)"));
    }
    let kf = k as f64;
    let simple = total / kf;
    let b = (2.0 * kf * (1.0 / delta).ln()).sqrt();
    let advanced = (-b + (b * b + 2.0 * kf * total).sqrt()) / kf;
    Ok(simple.max(advanced))
}

/// Indices with `|theta_j| > threshold`.
pub fn support(theta: &[f64], threshold: f64) -> ModelSet {
    let idx: Vec<usize> = theta
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > threshold)
        .map(|(i, _)| i)
        .collect();
    ModelSet::new(idx, theta.len()).expect("indices are distinct and in range")
}

// ---------------------------------------------------------------------------
// LASSO

/// `(1/n) ||y - X theta||^2`.
pub fn lasso_objective(x: &DesignMatrix, y: &[f64], theta: &[f64]) -> Result<f64> {
    check_len("response vector", x.n(), y.len())?;
    let fit = x.mul_vec(theta)?;
    Ok(y.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.n() as f64)
}

/// Frank–Wolfe duality gap `max_s <grad L(theta), theta - s>` over the l1 ball,
/// an upper bound on `L(theta) - min L`.
pub fn fw_dual_gap(x: &DesignMatrix, y: &[f64], theta: &[f64], c1: f64) -> Result<f64> {
    let g = lasso_gradient(x, y, theta)?;
    let inner: f64 = g.iter().zip(theta).map(|(a, b)| a * b).sum();
    let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(inner + c1 * gmax)
}

fn lasso_gradient(x: &DesignMatrix, y: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    let fit = x.mul_vec(theta)?;
    let r: Vec<f64> = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
    let scale = -2.0 / x.n() as f64;
    Ok(x.tr_mul_vec(&r)?.into_iter().map(|v| scale * v).collect())
}

/// Noiseless Frank–Wolfe over `{||theta||_1 <= c1}` for `steps` iterations.
pub fn lasso_exact_fw(x: &DesignMatrix, y: &[f64], c1: f64, steps: usize) -> Result<Vec<f64>> {
    let res = lasso_at_scale(x, y, c1, steps, 0.0, &RngStream::new(0))?;
    Ok(res.theta.expect("LASSO sets theta"))
}

/// Step count that balances optimization error against noise:
/// `ceil(n ||X||_inf^2 C1 eta / (sigma ||X||_{2,inf}))`, capped.
pub fn default_lasso_steps(x: &DesignMatrix, c1: f64, eta_step: f64, sigma: f64) -> usize {
    let k = x.n() as f64 * x.linf_norm().powi(2) * c1 * eta_step / (sigma * x.l2inf_norm());
    if k.is_finite() && k >= 1.0 {
        (k.ceil() as usize).min(MAX_DEFAULT_STEPS)
    } else {
        1
    }
}

/// Randomized Frank–Wolfe LASSO with the calibrated Laplace scale.
pub fn stable_lasso(
    x: &DesignMatrix,
    y: &[f64],
    cfg: &LassoConfig,
    stream: &RngStream,
) -> Result<SelectionResult> {
    cfg.validate()?;
    let scale = noise::scale_lasso(x.d(), cfg.c1, x, &cfg.policy)?;
    let mut res = lasso_at_scale(x, y, cfg.c1, cfg.steps, scale, stream)?;
    res.budgets = certify_budgets(cfg.steps, cfg.policy.eta_step, cfg.policy.delta)?;
    Ok(res)
}

/// Frank–Wolfe LASSO with Laplace noise of an explicit scale on every vertex
/// score; scale 0 is the exact algorithm. Step `t` draws from `stream.child(t)`.
pub fn lasso_at_scale(
    x: &DesignMatrix,
    y: &[f64],
    c1: f64,
    steps: usize,
    scale: f64,
    stream: &RngStream,
) -> Result<SelectionResult> {
    check_len("response vector", x.n(), y.len())?;
    if !(c1 > 0.0) || !c1.is_finite() {
        return Err(invalid(format!("C1 must be positive, got {c1}")));
    }
    if steps == 0 {
        return Err(invalid("LASSO needs at least one step"));
    }
    check_scale(scale)?;
    let (n, d) = (x.n(), x.d());
    let xm = x.entries();
    let yv = DVector::from_column_slice(y);
    let mut theta = vec![0.0; d];
    let mut resid = yv.clone();
    let mut trace = Vec::with_capacity(steps);
    let mut order = Vec::new();
    let gscale = -2.0 / n as f64;

    for t in 1..=steps {
        let grad = xm.tr_mul(&resid) * gscale;
        let mut scores = Vec::with_capacity(2 * d);
        for i in 0..d {
            scores.push(c1 * grad[i]);
            scores.push(-c1 * grad[i]);
        }
        let noisy = add_noise(&scores, scale, stream, t as u64);
        let chosen = argmin(&noisy, |_| true).expect("d >= 1");
        let (i, sign) = (chosen / 2, if chosen % 2 == 0 { 1.0 } else { -1.0 });

        let step = 2.0 / (t as f64 + 1.0);
        for v in theta.iter_mut() {
            *v *= 1.0 - step;
        }
        theta[i] += step * sign * c1;
        // r <- (1 - step) r + step (y - X phi)
        resid *= 1.0 - step;
        resid.axpy(step, &yv, 1.0);
        resid.axpy(-step * sign * c1, &xm.column(i), 1.0);
        if !order.contains(&i) {
            order.push(i);
        }
        trace.push(TraceStep {
            chosen,
            scores,
            noisy,
        });
    }
    let model = support(&theta, SUPPORT_THRESHOLD);
    order.retain(|i| model.contains(*i));
    Ok(SelectionResult {
        model,
        order,
        theta: Some(theta),
        trace,
        noise_scale: scale,
        budgets: Vec::new(),
    })
}

/// Minimizer of `1/2 ||y - X theta||^2 + lambda ||theta||_1` by cyclic
/// coordinate descent, stopped on a duality gap below
/// `tol * max(1, ||y||^2 / 2)`.
pub fn lasso_penalized_cd(
    x: &DesignMatrix,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<f64>> {
    check_len("response vector", x.n(), y.len())?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    let xm = x.entries();
    let d = x.d();
    let yv = DVector::from_column_slice(y);
    let half_yy = 0.5 * yv.norm_squared();
    let target = tol * half_yy.max(1.0);
    let sq: Vec<f64> = x.col_norms().iter().map(|v| v * v).collect();
    let mut theta = vec![0.0; d];
    let mut r = yv.clone();

    for _ in 0..max_sweeps {
        for j in 0..d {
            if sq[j] == 0.0 {
                continue;
            }
            let col = xm.column(j);
            let old = theta[j];
            let rho = col.dot(&r) + sq[j] * old;
            let new = soft_threshold(rho, lambda) / sq[j];
            if new != old {
                r.axpy(old - new, &col, 1.0);
                theta[j] = new;
            }
        }
        // Duality gap with the dual point r * min(1, lambda / ||X^T r||_inf).
        let xtr = xm.tr_mul(&r);
        let m = xtr.amax();
        let s = if m > lambda { lambda / m } else { 1.0 };
        let l1: f64 = theta.iter().map(|v| v.abs()).sum();
        let primal = 0.5 * r.norm_squared() + lambda * l1;
        let dual = half_yy - 0.5 * (&yv - &r * s).norm_squared();
        if primal - dual <= target {
            return Ok(theta);
        }
    }
    Err(PosiError::NonConvergence {
        what: "LASSO coordinate descent",
        iterations: max_sweeps,
    })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `||theta_lambda||_1` for the penalized LASSO solution at `lambda`.
pub fn lambda_to_c1(x: &DesignMatrix, y: &[f64], lambda: f64) -> Result<f64> {
    let theta = lasso_penalized_cd(x, y, lambda, 1e-8, 100_000)?;
    Ok(theta.iter().map(|v| v.abs()).sum())
}

// ---------------------------------------------------------------------------
// Marginal screening

/// The `k` features with the largest `|X_i^T y| / n`.
pub fn screening_exact(x: &DesignMatrix, y: &[f64], k: usize) -> Result<ModelSet> {
    Ok(screening_at_scale(x, y, k, 0.0, &RngStream::new(0))?.model)
}

/// Screening with the calibrated Laplace scale.
pub fn stable_screening(
    x: &DesignMatrix,
    y: &[f64],
    k: usize,
    policy: &NoisePolicy,
    stream: &RngStream,
) -> Result<SelectionResult> {
    let scale = noise::scale_screening(x.d(), x, policy)?;
    let mut res = screening_at_scale(x, y, k, scale, stream)?;
    res.budgets = certify_budgets(k, policy.eta_step, policy.delta)?;
    Ok(res)
}

/// Screening with fresh Laplace noise of an explicit scale in every round.
pub fn screening_at_scale(
    x: &DesignMatrix,
    y: &[f64],
    k: usize,
    scale: f64,
    stream: &RngStream,
) -> Result<SelectionResult> {
    check_k(k, x.d())?;
    check_scale(scale)?;
    let n = x.n() as f64;
    let c: Vec<f64> = x.tr_mul_vec(y)?.into_iter().map(|v| v / n).collect();
    let mut remaining = vec![true; x.d()];
    let mut order = Vec::with_capacity(k);
    let mut trace = Vec::with_capacity(k);
    for t in 1..=k {
        let scores: Vec<f64> = c
            .iter()
            .zip(&remaining)
            .map(|(v, r)| if *r { *v } else { f64::NAN })
            .collect();
        let noisy = add_noise(&scores, scale, stream, t as u64);
        let abs: Vec<f64> = noisy.iter().map(|v| v.abs()).collect();
        let chosen = argmax(&abs, |i| remaining[i]).expect("k <= d");
        remaining[chosen] = false;
        order.push(chosen);
        trace.push(TraceStep {
            chosen,
            scores,
            noisy,
        });
    }
    Ok(SelectionResult {
        model: ModelSet::new(order.clone(), x.d())?,
        order,
        theta: None,
        trace,
        noise_scale: scale,
        budgets: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Forward stepwise

/// Forward stepwise by largest normalized residual correlation.
pub fn fs_exact(x: &DesignMatrix, y: &[f64], k: usize) -> Result<ModelSet> {
    Ok(fs_at_scale(x, y, k, 0.0, &RngStream::new(0))?.model)
}

/// Forward stepwise with the calibrated Laplace scale.
pub fn stable_fs(
    x: &DesignMatrix,
    y: &[f64],
    k: usize,
    policy: &NoisePolicy,
    stream: &RngStream,
) -> Result<SelectionResult> {
    check_k(k, x.d())?;
    let scale = noise::scale_forward_stepwise(x.d(), k, policy)?;
    let mut res = fs_at_scale(x, y, k, scale, stream)?;
    res.budgets = certify_budgets(k, policy.eta_step, policy.delta)?;
    Ok(res)
}

/// Forward stepwise with Laplace noise of an explicit scale on the scores
/// `X_j^T P y / ||P X_j||`, `P` the projector off the selected columns.
pub fn fs_at_scale(
    x: &DesignMatrix,
    y: &[f64],
    k: usize,
    scale: f64,
    stream: &RngStream,
) -> Result<SelectionResult> {
    check_k(k, x.d())?;
    check_len("response vector", x.n(), y.len())?;
    check_scale(scale)?;
    let d = x.d();
    let xm = x.entries();
    // z_j = P X_j and r = P y, updated as columns enter.
    let mut z: Vec<DVector<f64>> = (0..d).map(|j| xm.column(j).into_owned()).collect();
    let mut r = DVector::from_column_slice(y);
    let mut remaining = vec![true; d];
    let mut order = Vec::with_capacity(k);
    let mut trace = Vec::with_capacity(k);

    for t in 1..=k {
        let eligible: Vec<bool> = (0..d)
            .map(|j| remaining[j] && z[j].norm() > COLLINEAR_TOL * x.col_norms()[j])
            .collect();
        if !eligible.iter().any(|e| *e) {
            return Err(PosiError::AllCandidatesCollinear { step: t });
        }
        let scores: Vec<f64> = (0..d)
            .map(|j| {
                if eligible[j] {
                    z[j].dot(&r) / z[j].norm()
                } else {
                    f64::NAN
                }
            })
            .collect();
        let noisy = add_noise(&scores, scale, stream, t as u64);
        let abs: Vec<f64> = noisy.iter().map(|v| v.abs()).collect();
        let chosen = argmax(&abs, |j| eligible[j]).expect("some candidate is eligible");
        remaining[chosen] = false;
        order.push(chosen);
        trace.push(TraceStep {
            chosen,
            scores,
            noisy,
        });

        let q = z[chosen].normalize();
        for _ in 0..2 {
            let c = q.dot(&r);
            r.axpy(-c, &q, 1.0);
            for (j, zj) in z.iter_mut().enumerate() {
                if remaining[j] {
                    let c = q.dot(zj);
                    zj.axpy(-c, &q, 1.0);
                }
            }
        }
    }
    Ok(SelectionResult {
        model: ModelSet::new(order.clone(), d)?,
        order,
        theta: None,
        trace,
        noise_scale: scale,
        budgets: Vec::new(),
    })
}

/// Forward stepwise by largest drop in residual sum of squares, refitting
/// every candidate model by OLS. Slow; used to cross-check [`fs_exact`].
pub fn fs_exact_rss(x: &DesignMatrix, y: &[f64], k: usize) -> Result<Vec<usize>> {
    check_k(k, x.d())?;
    check_len("response vector", x.n(), y.len())?;
    let d = x.d();
    let rss = |idx: &[usize]| -> Result<f64> {
        let m = ModelSet::new(idx.to_vec(), d)?;
        let qr = SubmodelQr::new(x, &m)?;
        let beta = qr.pseudo_solve(y)?;
        let sub = x.submatrix(&m);
        let fit = &sub * DVector::from_vec(beta);
        Ok(y.iter().zip(fit.iter()).map(|(a, b)| (a - b).powi(2)).sum())
    };
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut basis = OrthoBasis::new();
    let mut current = y.iter().map(|v| v * v).sum::<f64>();
    for t in 1..=k {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..d {
            if chosen.contains(&j) {
                continue;
            }
            let col = x.column(j).into_owned();
            if !(basis.project_out(&col).norm() > COLLINEAR_TOL * x.col_norms()[j]) {
                continue;
            }
            let mut idx = chosen.clone();
            idx.push(j);
            let drop = current - rss(&idx)?;
            if best.is_none_or(|(_, b)| drop > b) {
                best = Some((j, drop));
            }
        }
        let (j, drop) = best.ok_or(PosiError::AllCandidatesCollinear { step: t })?;
        basis.push(&x.column(j).into_owned(), COLLINEAR_TOL);
        chosen.push(j);
        current -= drop;
    }
    Ok(chosen)
}

// ---------------------------------------------------------------------------

fn check_k(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(invalid(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    Ok(())
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(invalid(format!("noise scale must be finite and >= 0, got {scale}")));
    }
    Ok(())
}

/// Adds one Laplace draw per score from `stream.child(step)`, in candidate
/// order. A draw is taken for every slot (even those out of play) so that the
/// stream position of candidate `j` never depends on earlier selections.
fn add_noise(scores: &[f64], scale: f64, stream: &RngStream, step: u64) -> Vec<f64> {
    if scale == 0.0 {
        return scores.to_vec();
    }
    let mut rng = stream.child(step).rng();
    scores
        .iter()
        .map(|s| s + laplace_sample(scale, &mut rng))
        .collect()
}

fn argmax(v: &[f64], eligible: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in v.iter().enumerate() {
        if eligible(i) && best.is_none_or(|b| *x > v[b]) {
            best = Some(i);
        }
    }
    best
}

fn argmin(v: &[f64], eligible: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in v.iter().enumerate() {
        if eligible(i) && best.is_none_or(|b| *x < v[b]) {
            best = Some(i);
        }
    }
    best
}

/// Noise magnitude (`sigma` or `G`) of a policy, as used by the default
/// LASSO step rule.
pub fn policy_magnitude(policy: &NoisePolicy) -> f64 {
    match policy.family {
        NoiseFamily::Subgaussian { sigma } => sigma,
        NoiseFamily::Orlicz { g, .. } => g,
    }
}
