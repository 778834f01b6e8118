//! Synthetic coverage studies: data generation, one trial of the
//! select → certify → fit → interval pipeline, a sample-splitting baseline,
//! and per-`eta` summaries.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PosiError, Result};
use crate::linmodel::{self, DesignMatrix, ModelSet};
use crate::noise::{NoisePolicy, RngStream};
use crate::selectors::{self, LassoConfig, SelectionResult};
use crate::stability::{
    allocate_residual, alpha_split, best_posi_constant, build_intervals, posi_constant,
    StabilityBudget, VarianceMode,
};

// Top-level stream labels.
const STREAM_X: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SELECT: u64 = 3;
const STREAM_PILOT: u64 = 4;

/// Frank–Wolfe steps used by the noiseless LASSO in the splitting baseline
/// when the config does not fix a step count.
pub const EXACT_LASSO_STEPS: usize = 1000;

/// Width quantile levels reported in summaries.
pub const WIDTH_LEVELS: [f64; 4] = [0.80, 0.85, 0.90, 1.00];

/// `0.5, 1.0, ..., 10.0`.
pub fn default_eta_grid() -> Vec<f64> {
    (1..=20).map(|i| 0.5 * i as f64).collect()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum SelectorSpec {
    /// Stable marginal screening of `k` features.
    Screen { k: usize },
    /// Stable forward stepwise for `k` steps.
    Fs { k: usize },
    /// Stable Frank–Wolfe LASSO. Give exactly one of `c1` and `lambda`; with
    /// `lambda` the radius is the l1 norm of the penalized solution on a pilot
    /// draw that no trial reuses.
    Lasso {
        #[serde(default)]
        c1: Option<f64>,
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        steps: Option<usize>,
    },
    /// A model fixed in advance (no selection, zero budget).
    Fixed { model: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceChoice {
    #[default]
    Known,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    /// Value of each active coefficient.
    pub signal: f64,
    /// Share of leading coefficients set to `signal`.
    pub active_fraction: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Weights of `(delta, tau, nu)` in `alpha`; equal thirds by default.
    #[serde(default)]
    pub alpha_weights: Option<[f64; 3]>,
    pub selector: SelectorSpec,
    /// Per-round `eta` values to sweep.
    #[serde(default = "default_eta_grid")]
    pub eta_grid: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default = "default_true")]
    pub regenerate_x_per_trial: bool,
    #[serde(default)]
    pub variance: VarianceChoice,
    /// Also run the sample-splitting baseline with this selection share.
    #[serde(default)]
    pub baseline_split_fraction: Option<f64>,
    /// Give every `eta` its own selection noise instead of sharing it.
    #[serde(default)]
    pub independent_eta_seeds: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(invalid("n and d must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.active_fraction) {
            return Err(invalid(format!(
                "active_fraction must lie in [0, 1], got {}",
                self.active_fraction
            )));
        }
        if !self.signal.is_finite() {
            return Err(invalid("signal must be finite"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        alpha_split(self.alpha, self.alpha_weights)?;
        if self.trials == 0 {
            return Err(invalid("trials must be >= 1"));
        }
        if self.eta_grid.is_empty() {
            return Err(PosiError::EmptyInput("eta grid"));
        }
        if self.eta_grid.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(invalid("eta grid values must be positive and finite"));
        }
        if self.variance == VarianceChoice::Estimated && self.n <= self.d {
            return Err(PosiError::InsufficientSamples {
                n: self.n,
                d: self.d,
            });
        }
        if let Some(f) = self.baseline_split_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(invalid(format!("baseline split fraction must lie in (0, 1), got {f}")));
            }
        }
        match &self.selector {
            SelectorSpec::Screen { k } | SelectorSpec::Fs { k } => {
                if *k == 0 || *k > self.d {
                    return Err(invalid(format!("need 1 <= k <= d, got k = {k}")));
                }
            }
            SelectorSpec::Lasso { c1, lambda, steps } => {
                match (c1, lambda) {
                    (Some(v), None) | (None, Some(v)) if *v > 0.0 && v.is_finite() => {}
                    _ => return Err(invalid("LASSO needs exactly one positive c1 or lambda")),
                }
                if *steps == Some(0) {
                    return Err(invalid("LASSO steps must be >= 1"));
                }
            }
            SelectorSpec::Fixed { model } => {
                ModelSet::new(model.clone(), self.d)?;
            }
        }
        Ok(())
    }

    pub fn variance_mode(&self) -> VarianceMode {
        match self.variance {
            VarianceChoice::Known => VarianceMode::KnownSigma,
            VarianceChoice::Estimated => VarianceMode::EstimatedSigma {
                dof: (self.n - self.d) as u64,
            },
        }
    }

    pub fn beta(&self) -> Vec<f64> {
        let active = (self.active_fraction * self.d as f64).floor() as usize;
        (0..self.d)
            .map(|i| if i < active { self.signal } else { 0.0 })
            .collect()
    }
}

/// One synthetic draw.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub x: DesignMatrix,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    pub y: Vec<f64>,
}

fn gaussian_design(n: usize, d: usize, stream: &RngStream) -> Result<DesignMatrix> {
    let mut rng = stream.rng();
    let scale = 1.0 / (n as f64).sqrt();
    let v: Vec<f64> = (0..n * d)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect();
    DesignMatrix::new(DMatrix::from_vec(n, d, v))
}

/// `X_ij ~ N(0, 1/n)`, `y = X beta + N(0, sigma^2 I)`.
///
/// With `regenerate_x_per_trial = false` every trial shares the design drawn
/// for trial 0.
pub fn gen_synthetic(cfg: &ExperimentConfig, trial: u64) -> Result<Synthetic> {
    let root = RngStream::new(cfg.master_seed);
    let x_index = if cfg.regenerate_x_per_trial { trial } else { 0 };
    let x = gaussian_design(cfg.n, cfg.d, &root.descend(&[STREAM_X, x_index]))?;
    gen_response(cfg, x, &root.descend(&[STREAM_NOISE, trial]))
}

fn gen_response(cfg: &ExperimentConfig, x: DesignMatrix, stream: &RngStream) -> Result<Synthetic> {
    let beta = cfg.beta();
    let mu = x.mul_vec(&beta)?;
    let mut rng = stream.rng();
    let y = mu
        .iter()
        .map(|m| m + cfg.sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(Synthetic { x, beta, mu, y })
}

/// LASSO radius for a config: `c1` directly, or the l1 norm of the penalized
/// solution at `lambda` on an independent pilot draw.
pub fn resolve_c1(cfg: &ExperimentConfig) -> Result<Option<f64>> {
    match &cfg.selector {
        SelectorSpec::Lasso { c1: Some(c1), .. } => Ok(Some(*c1)),
        SelectorSpec::Lasso {
            lambda: Some(lambda),
            ..
        } => {
            let root = RngStream::new(cfg.master_seed);
            let x = gaussian_design(cfg.n, cfg.d, &root.descend(&[STREAM_PILOT, 0]))?;
            let pilot = gen_response(cfg, x, &root.descend(&[STREAM_PILOT, 1]))?;
            let c1 = selectors::lambda_to_c1(&pilot.x, &pilot.y, *lambda)?;
            if !(c1 > 0.0) {
                return Err(invalid(format!(
                    "lambda = {lambda} shrinks the pilot LASSO fit to zero; choose a smaller lambda"
                )));
            }
            Ok(Some(c1))
        }
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub eta: f64,
    pub model: ModelSet,
    /// Every selected target lies in its interval (true for an empty model).
    pub covered: bool,
    pub widths: Vec<f64>,
    pub fdr: f64,
    pub risk: Option<f64>,
    /// PoSI constant; 0 for an empty model.
    pub k_const: f64,
    pub budget_used: StabilityBudget,
    /// The selected submodel was rank deficient; the trial is excluded.
    pub flagged: bool,
}

impl TrialRecord {
    pub fn is_empty_model(&self) -> bool {
        self.model.is_empty()
    }
}

/// Everything a trial needs that does not change between trials.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub c1: Option<f64>,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            c1: resolve_c1(cfg)?,
        })
    }

    fn lambda(&self) -> f64 {
        match self.cfg.selector {
            SelectorSpec::Lasso {
                lambda: Some(l), ..
            } => l,
            _ => 0.0,
        }
    }

    fn steps(&self, x: &DesignMatrix, eta: f64) -> usize {
        match self.cfg.selector {
            SelectorSpec::Lasso { steps: Some(s), .. } => s,
            _ => selectors::default_lasso_steps(
                x,
                self.c1.unwrap_or(1.0),
                eta,
                self.cfg.sigma,
            ),
        }
    }

    fn select_stream(&self, trial: u64, eta: f64) -> RngStream {
        let s = RngStream::new(self.cfg.master_seed).descend(&[STREAM_SELECT, trial]);
        if self.cfg.independent_eta_seeds {
            s.child(eta.to_bits())
        } else {
            s
        }
    }

    /// Runs the stable selector at per-round `eta`; returns the selection and
    /// the risk for LASSO.
    fn select(
        &self,
        data: &Synthetic,
        eta: f64,
        delta_sel: f64,
        trial: u64,
    ) -> Result<(SelectionResult, Option<f64>)> {
        let cfg = &self.cfg;
        let stream = self.select_stream(trial, eta);
        let policy = NoisePolicy::subgaussian(cfg.sigma, delta_sel, eta)?;
        match &cfg.selector {
            SelectorSpec::Screen { k } => Ok((
                selectors::stable_screening(&data.x, &data.y, *k, &policy, &stream)?,
                None,
            )),
            SelectorSpec::Fs { k } => Ok((
                selectors::stable_fs(&data.x, &data.y, *k, &policy, &stream)?,
                None,
            )),
            SelectorSpec::Lasso { .. } => {
                let lcfg = LassoConfig {
                    c1: self.c1.expect("resolved for LASSO"),
                    steps: self.steps(&data.x, eta),
                    policy,
                };
                let res = selectors::stable_lasso(&data.x, &data.y, &lcfg, &stream)?;
                let theta = res.theta.as_deref().expect("LASSO sets theta");
                let risk = lasso_risk(&data.x, &data.y, theta, self.lambda())?;
                Ok((res, Some(risk)))
            }
            SelectorSpec::Fixed { model } => Ok((
                SelectionResult {
                    model: ModelSet::new(model.clone(), cfg.d)?,
                    order: model.clone(),
                    theta: None,
                    trace: Vec::new(),
                    noise_scale: 0.0,
                    budgets: vec![StabilityBudget::ZERO],
                },
                None,
            )),
        }
    }

    pub fn run_trial(&self, eta: f64, trial: u64) -> Result<TrialRecord> {
        let cfg = &self.cfg;
        let data = gen_synthetic(cfg, trial)?;
        let split = alpha_split(cfg.alpha, cfg.alpha_weights)?;
        let (sel, risk) = self.select(&data, eta, split.selector_delta(), trial)?;
        let (alloc, aligned) = allocate_residual(cfg.alpha, &sel.budgets)?;
        score(cfg, &data.x, &data.y, &data.mu, &data.beta, sel.model, trial, eta, risk, |m| {
            best_posi_constant(m, alloc.delta, &aligned, cfg.variance_mode())
        })
    }

    /// Exact selection on the first `ceil(fraction n)` rows, classical
    /// intervals fitted on the rest.
    pub fn data_split_baseline(&self, fraction: f64, trial: u64) -> Result<TrialRecord> {
        let cfg = &self.cfg;
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(invalid(format!("split fraction must lie in (0, 1), got {fraction}")));
        }
        let n1 = ((fraction * cfg.n as f64).ceil() as usize).clamp(1, cfg.n - 1);
        let data = gen_synthetic(cfg, trial)?;
        let (sel_rows, inf_rows) = split_rows(cfg.n, n1);
        let x1 = data.x.select_rows(&sel_rows)?;
        let x2 = data.x.select_rows(&inf_rows)?;
        let y1: Vec<f64> = sel_rows.iter().map(|&i| data.y[i]).collect();
        let y2: Vec<f64> = inf_rows.iter().map(|&i| data.y[i]).collect();
        let mu2: Vec<f64> = inf_rows.iter().map(|&i| data.mu[i]).collect();

        let (model, risk) = match &cfg.selector {
            SelectorSpec::Screen { k } => (selectors::screening_exact(&x1, &y1, *k)?, None),
            SelectorSpec::Fs { k } => (selectors::fs_exact(&x1, &y1, *k)?, None),
            SelectorSpec::Lasso { steps, .. } => {
                let c1 = self.c1.expect("resolved for LASSO");
                let theta =
                    selectors::lasso_exact_fw(&x1, &y1, c1, steps.unwrap_or(EXACT_LASSO_STEPS))?;
                let risk = lasso_risk(&x1, &y1, &theta, self.lambda())?;
                (selectors::support(&theta, selectors::SUPPORT_THRESHOLD), Some(risk))
            }
            SelectorSpec::Fixed { model } => (ModelSet::new(model.clone(), cfg.d)?, None),
        };
        let mode = match cfg.variance {
            VarianceChoice::Known => VarianceMode::KnownSigma,
            VarianceChoice::Estimated => {
                if x2.n() <= cfg.d {
                    return Err(PosiError::InsufficientSamples { n: x2.n(), d: cfg.d });
                }
                VarianceMode::EstimatedSigma {
                    dof: (x2.n() - cfg.d) as u64,
                }
            }
        };
        score(cfg, &x2, &y2, &mu2, &data.beta, model, trial, 0.0, risk, |m| {
            Ok((posi_constant(m, cfg.alpha, &StabilityBudget::ZERO, mode)?, StabilityBudget::ZERO))
        })
    }
}

/// Row indices `0..n1` for selection and `n1..n` for inference.
pub fn split_rows(n: usize, n1: usize) -> (Vec<usize>, Vec<usize>) {
    ((0..n1).collect(), (n1..n).collect())
}

/// `||y - X theta||^2 / (2n) + (lambda / n) ||theta||_1`.
pub fn lasso_risk(x: &DesignMatrix, y: &[f64], theta: &[f64], lambda: f64) -> Result<f64> {
    let l = selectors::lasso_objective(x, y, theta)?;
    let l1: f64 = theta.iter().map(|v| v.abs()).sum();
    Ok(0.5 * l + lambda * l1 / x.n() as f64)
}

#[allow(clippy::too_many_arguments)]
fn score(
    cfg: &ExperimentConfig,
    x: &DesignMatrix,
    y: &[f64],
    mu: &[f64],
    beta: &[f64],
    model: ModelSet,
    trial: u64,
    eta: f64,
    risk: Option<f64>,
    constant: impl Fn(usize) -> Result<(f64, StabilityBudget)>,
) -> Result<TrialRecord> {
    let false_sel = model.indices().iter().filter(|&&j| beta[j] == 0.0).count();
    let fdr = false_sel as f64 / model.len().max(1) as f64;
    let mut rec = TrialRecord {
        trial,
        eta,
        model: model.clone(),
        covered: true,
        widths: Vec::new(),
        fdr,
        risk,
        k_const: 0.0,
        budget_used: StabilityBudget::ZERO,
        flagged: false,
    };
    if model.is_empty() {
        return Ok(rec);
    }
    let scale = match cfg.variance {
        VarianceChoice::Known => cfg.sigma,
        VarianceChoice::Estimated => linmodel::sigma_hat_full_model(x, y)?.0,
    };
    let fitted = linmodel::fit_with_scale(x, &model, y, scale)
        .and_then(|fit| Ok((fit, linmodel::target_coefficients(x, &model, mu)?)));
    let (fit, targets) = match fitted {
        Ok(v) => v,
        Err(PosiError::RankDeficient { .. }) => {
            rec.flagged = true;
            rec.covered = false;
            return Ok(rec);
        }
        Err(e) => return Err(e),
    };
    let (k, budget) = constant(model.len())?;
    let ci = build_intervals(&fit, k)?;
    rec.covered = ci.covers(&targets);
    rec.widths = ci.widths();
    rec.k_const = k;
    rec.budget_used = budget;
    Ok(rec)
}

/// `ExperimentConfig`-level convenience wrapper around [`Prepared::run_trial`].
pub fn run_trial(cfg: &ExperimentConfig, eta: f64, trial: u64) -> Result<TrialRecord> {
    Prepared::new(cfg)?.run_trial(eta, trial)
}

/// Wrapper around [`Prepared::data_split_baseline`].
pub fn data_split_baseline(cfg: &ExperimentConfig, fraction: f64, trial: u64) -> Result<TrialRecord> {
    Prepared::new(cfg)?.data_split_baseline(fraction, trial)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub eta: f64,
    pub trials: usize,
    /// Trials excluded because the selected submodel was rank deficient.
    pub flagged: usize,
    /// Trials (among those used) that selected nothing.
    pub empty_models: usize,
    /// Share of used trials whose intervals covered every target.
    pub coverage: Option<f64>,
    /// `(level, nearest-rank quantile)` of the pooled widths; `None` when no
    /// trial produced an interval.
    pub width_quantiles: Vec<(f64, Option<f64>)>,
    pub mean_fdr: Option<f64>,
    pub mean_risk: Option<f64>,
    pub mean_k: Option<f64>,
    pub mean_model_size: Option<f64>,
}

impl ExperimentSummary {
    pub fn width_quantile(&self, level: f64) -> Option<f64> {
        self.width_quantiles
            .iter()
            .find(|(l, _)| (*l - level).abs() < 1e-12)
            .and_then(|(_, q)| *q)
    }

    pub fn width_max(&self) -> Option<f64> {
        self.width_quantile(1.0)
    }

    pub fn miscoverage(&self) -> Option<f64> {
        self.coverage.map(|c| 1.0 - c)
    }
}

/// Nearest-rank quantile `sorted[ceil(q N) - 1]` of an ascending slice.
pub fn nearest_rank(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    Some(sorted[rank - 1])
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

/// Summarizes records (all at the same `eta`) in the order given.
pub fn aggregate(records: &[TrialRecord]) -> Result<ExperimentSummary> {
    let first = records.first().ok_or(PosiError::EmptyInput("trial records"))?;
    let used: Vec<&TrialRecord> = records.iter().filter(|r| !r.flagged).collect();
    let mut widths: Vec<f64> = used.iter().flat_map(|r| r.widths.iter().copied()).collect();
    widths.sort_by(f64::total_cmp);
    let nonempty = || used.iter().filter(|r| !r.model.is_empty());
    Ok(ExperimentSummary {
        eta: first.eta,
        trials: records.len(),
        flagged: records.len() - used.len(),
        empty_models: used.iter().filter(|r| r.model.is_empty()).count(),
        coverage: mean(used.iter().map(|r| if r.covered { 1.0 } else { 0.0 })),
        width_quantiles: WIDTH_LEVELS
            .iter()
            .map(|&l| (l, nearest_rank(&widths, l)))
            .collect(),
        mean_fdr: mean(used.iter().map(|r| r.fdr)),
        mean_risk: mean(used.iter().filter_map(|r| r.risk)),
        mean_k: mean(nonempty().map(|r| r.k_const)),
        mean_model_size: mean(used.iter().map(|r| r.model.len() as f64)),
    })
}

/// Records and summary for one `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaResult {
    pub eta: f64,
    pub records: Vec<TrialRecord>,
    pub summary: ExperimentSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub c1: Option<f64>,
    pub sweep: Vec<EtaResult>,
    pub baseline: Option<EtaResult>,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))
}

/// Runs `trials` for every `eta` in `grid` on `workers` threads. Results are
/// collected in trial order, so they do not depend on the worker count.
pub fn eta_sweep(cfg: &ExperimentConfig, grid: &[f64], workers: usize) -> Result<Vec<EtaResult>> {
    let prep = Prepared::new(cfg)?;
    if grid.is_empty() {
        return Err(PosiError::EmptyInput("eta grid"));
    }
    let pool = pool(workers)?;
    pool.install(|| sweep_with(&prep, grid))
}

fn sweep_with(prep: &Prepared, grid: &[f64]) -> Result<Vec<EtaResult>> {
    grid.iter()
        .map(|&eta| {
            let records = (0..prep.cfg.trials as u64)
                .into_par_iter()
                .map(|t| prep.run_trial(eta, t))
                .collect::<Result<Vec<_>>>()?;
            let summary = aggregate(&records)?;
            Ok(EtaResult {
                eta,
                records,
                summary,
            })
        })
        .collect()
}

/// The full study described by `cfg`: the `eta` sweep plus, if configured,
/// the sample-splitting baseline.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let prep = Prepared::new(cfg)?;
    let pool = pool(workers)?;
    pool.install(|| {
        let sweep = sweep_with(&prep, &cfg.eta_grid)?;
        let baseline = match cfg.baseline_split_fraction {
            None => None,
            Some(f) => {
                let records = (0..cfg.trials as u64)
                    .into_par_iter()
                    .map(|t| prep.data_split_baseline(f, t))
                    .collect::<Result<Vec<_>>>()?;
                let summary = aggregate(&records)?;
                Some(EtaResult {
                    eta: 0.0,
                    records,
                    summary,
                })
            }
        };
        Ok(ExperimentOutput {
            c1: prep.c1,
            sweep,
            baseline,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(widths: Vec<f64>, covered: bool) -> TrialRecord {
        TrialRecord {
            trial: 0,
            eta: 1.0,
            model: ModelSet::new((0..widths.len()).collect(), widths.len().max(1)).unwrap(),
            covered,
            widths,
            fdr: 0.0,
            risk: None,
            k_const: 2.0,
            budget_used: StabilityBudget::ZERO,
            flagged: false,
        }
    }

    #[test]
    fn nearest_rank_rule() {
        let v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(nearest_rank(&v, 0.9), Some(9.0));
        assert_eq!(nearest_rank(&v, 1.0), Some(10.0));
        assert_eq!(nearest_rank(&v, 0.85), Some(9.0));
        assert_eq!(nearest_rank(&v, 0.8), Some(8.0));
        assert_eq!(nearest_rank(&[], 0.9), None);
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[rec(vec![1.0, 2.0], true), rec(vec![3.0], true)]).unwrap();
        assert_eq!(s.coverage, Some(1.0));
        let one = aggregate(&[rec(vec![4.5], false)]).unwrap();
        assert_eq!(one.width_max(), Some(4.5));
        assert_eq!(one.width_quantile(0.9), Some(4.5));
        assert_eq!(one.coverage, Some(0.0));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn default_grid() {
        let g = default_eta_grid();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[19], 10.0);
    }
}
