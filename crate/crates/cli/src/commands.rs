use std::io::Write;
use std::path::Path;

use serde_json::json;
use stable_posi::experiments::{self, EtaResult, ExperimentConfig};
use stable_posi::linmodel;
use stable_posi::noise::{NoisePolicy, RngStream};
use stable_posi::selectors::{self, LassoConfig};
use stable_posi::stability::{self, OrliczFunction, VarianceMode};

use crate::io::{self, fmt_f64, fmt_opt, INTERVALS_HEADER, SELECTION_HEADER};
use crate::manifest::{output, sidecar_path, ManifestBuilder, RunManifest};
use crate::{BudgetArgs, CiArgs, Cli, CliError, Command, ExperimentArgs, Method, ReplayArgs, SelectArgs};

pub const RECORDS_HEADER: [&str; 14] = [
    "eta", "trial", "model_size", "model", "covered", "flagged", "fdr", "risk", "k_const",
    "budget_eta", "budget_tau", "budget_nu", "width_max", "widths",
];
pub const SUMMARY_HEADER: [&str; 14] = [
    "eta", "trials", "flagged", "empty_models", "coverage", "miscoverage", "mean_model_size",
    "mean_k", "width_q80", "width_q85", "width_q90", "width_max", "mean_fdr", "mean_risk",
];
pub const PLOT_HEADER: [&str; 7] = ["eta", "width_max", "width_q90", "width_q85", "width_q80", "fdr", "risk"];
pub const BUDGET_HEADER: &str = "certificate,eta,tau,nu";

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn dispatch(cmd: Command, argv: &[String], stdout: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Select(a) => select(&a, argv),
        Command::Ci(a) => ci(&a, argv),
        Command::Experiment(a) => experiment(&a, argv),
        Command::Budget(a) => budget(&a, stdout),
        Command::Replay(a) => replay(&a, stdout),
    }
}

fn check_open_unit(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--{name} must lie in (0, 1), got {v}")))
    }
}

pub fn select(a: &SelectArgs, argv: &[String]) -> Result<(), CliError> {
    let mb = ManifestBuilder::start("select", argv);
    let lasso_only = a.c1.is_some() || a.lambda.is_some() || a.steps.is_some();
    if a.method != Method::Lasso && lasso_only {
        return Err(usage("--c1, --lambda and --steps apply to --method lasso only"));
    }
    let k = match a.method {
        Method::Lasso => None,
        _ => Some(a.k.ok_or_else(|| usage("--k is required for --method screen and fs"))?),
    };
    if a.method == Method::Lasso && a.k.is_some() {
        return Err(usage("--k does not apply to --method lasso"));
    }
    check_open_unit("delta", a.delta)?;
    let (x, y) = io::read_data(&a.x, &a.y)?;
    let policy = match &a.orlicz {
        None => NoisePolicy::subgaussian(a.sigma, a.delta, a.eta)?,
        Some(name) => NoisePolicy::orlicz(OrliczFunction::from_name(name)?, a.sigma, a.delta, a.eta)?,
    };
    let stream = RngStream::new(a.seed);
    let mut config = serde_json::to_value(a).expect("arguments serialize");
    let sel = match a.method {
        Method::Screen => selectors::stable_screening(&x, &y, k.unwrap(), &policy, &stream)?,
        Method::Fs => selectors::stable_fs(&x, &y, k.unwrap(), &policy, &stream)?,
        Method::Lasso => {
            let c1 = match (a.c1, a.lambda) {
                (Some(c1), None) => c1,
                (None, Some(lambda)) => selectors::lambda_to_c1(&x, &y, lambda)?,
                _ => return Err(usage("--method lasso needs one of --c1 and --lambda")),
            };
            let steps = a.steps.unwrap_or_else(|| {
                selectors::default_lasso_steps(&x, c1, a.eta, selectors::policy_magnitude(&policy))
            });
            config["c1"] = json!(c1);
            config["steps"] = json!(steps);
            selectors::stable_lasso(&x, &y, &LassoConfig { c1, steps, policy }, &stream)?
        }
    };
    config["noise_scale"] = json!(sel.noise_scale);
    io::write_selection(&a.out, &sel)?;
    mb.finish(config, Some(a.seed), vec![output(&a.out, &SELECTION_HEADER)])
        .write(&sidecar_path(&a.out))
}

/// `known:<sigma>` or `estimate`.
fn parse_sigma(spec: &str) -> Result<Option<f64>, CliError> {
    if spec == "estimate" {
        return Ok(None);
    }
    let v = spec
        .strip_prefix("known:")
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| usage(format!("--sigma must be known:<value> or estimate, got {spec:?}")))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(usage(format!("known sigma must be positive, got {v}")));
    }
    Ok(Some(v))
}

fn parse_weights(spec: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<f64> = spec
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--weights must be three numbers, got {spec:?}")))?;
    parts
        .try_into()
        .map_err(|_| usage(format!("--weights must be three numbers, got {spec:?}")))
}

pub fn ci(a: &CiArgs, argv: &[String]) -> Result<(), CliError> {
    let mb = ManifestBuilder::start("ci", argv);
    check_open_unit("alpha", a.alpha)?;
    let sigma = parse_sigma(&a.sigma)?;
    let weights = a.weights.as_deref().map(parse_weights).transpose()?;
    let stored = io::read_selection(&a.selection)?;
    let (x, y) = io::read_data(&a.x, &a.y)?;
    let model = stored.model_set(x.d())?;

    let (scale, mode) = match sigma {
        Some(s) => (s, VarianceMode::KnownSigma),
        None => {
            let (s, dof) = linmodel::sigma_hat_full_model(&x, &y)?;
            (s, VarianceMode::EstimatedSigma { dof: dof as u64 })
        }
    };
    let (alloc, aligned) = match weights {
        None => stability::allocate_residual(a.alpha, &stored.budgets)?,
        Some(w) => {
            let alloc = stability::alpha_split(a.alpha, Some(w))?;
            let aligned = stability::align_slack(&stored.budgets);
            let (tau, nu) = (aligned[0].tau, aligned[0].nu);
            if tau > alloc.tau + 1e-12 || nu > alloc.nu + 1e-12 {
                return Err(usage(format!(
                    "selection spends tau = {tau}, nu = {nu}, more than the weights allow ({}, {})",
                    alloc.tau, alloc.nu
                )));
            }
            (alloc, aligned)
        }
    };

    let mut config = serde_json::to_value(a).expect("arguments serialize");
    config["sigma_value"] = json!(scale);
    config["variance_mode"] = json!(mode);
    config["allocation"] = json!(alloc);
    let ci = if model.is_empty() {
        None
    } else {
        let (k, used) = stability::best_posi_constant(model.len(), alloc.delta, &aligned, mode)?;
        config["k_const"] = json!(k);
        config["budget_used"] = json!(used);
        let fit = linmodel::fit_with_scale(&x, &model, &y, scale)?;
        Some(stability::build_intervals(&fit, k)?)
    };
    io::write_intervals(&a.out, ci.as_ref())?;
    mb.finish(config, None, vec![output(&a.out, &INTERVALS_HEADER)])
        .write(&sidecar_path(&a.out))
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn write_records(path: &Path, results: &[&EtaResult]) -> Result<(), CliError> {
    let mut w = io::writer(path)?;
    io::write_row(path, &mut w, RECORDS_HEADER)?;
    for r in results {
        for t in &r.records {
            let wmax = t.widths.iter().copied().reduce(f64::max);
            io::write_row(
                path,
                &mut w,
                [
                    fmt_f64(t.eta),
                    t.trial.to_string(),
                    t.model.len().to_string(),
                    join(t.model.indices()),
                    (t.covered as u8).to_string(),
                    (t.flagged as u8).to_string(),
                    fmt_f64(t.fdr),
                    fmt_opt(t.risk),
                    fmt_f64(t.k_const),
                    fmt_f64(t.budget_used.eta),
                    fmt_f64(t.budget_used.tau),
                    fmt_f64(t.budget_used.nu),
                    fmt_opt(wmax),
                    join(t.widths.iter().map(|v| fmt_f64(*v))),
                ],
            )?;
        }
    }
    io::finish(path, w)
}

fn write_summary(path: &Path, results: &[&EtaResult]) -> Result<(), CliError> {
    let mut w = io::writer(path)?;
    io::write_row(path, &mut w, SUMMARY_HEADER)?;
    for r in results {
        let s = &r.summary;
        io::write_row(
            path,
            &mut w,
            [
                fmt_f64(r.eta),
                s.trials.to_string(),
                s.flagged.to_string(),
                s.empty_models.to_string(),
                fmt_opt(s.coverage),
                fmt_opt(s.miscoverage()),
                fmt_opt(s.mean_model_size),
                fmt_opt(s.mean_k),
                fmt_opt(s.width_quantile(0.80)),
                fmt_opt(s.width_quantile(0.85)),
                fmt_opt(s.width_quantile(0.90)),
                fmt_opt(s.width_max()),
                fmt_opt(s.mean_fdr),
                fmt_opt(s.mean_risk),
            ],
        )?;
    }
    io::finish(path, w)
}

fn write_plot(path: &Path, results: &[&EtaResult]) -> Result<(), CliError> {
    let mut w = io::writer(path)?;
    io::write_row(path, &mut w, PLOT_HEADER)?;
    for r in results {
        let s = &r.summary;
        io::write_row(
            path,
            &mut w,
            [
                fmt_f64(r.eta),
                fmt_opt(s.width_max()),
                fmt_opt(s.width_quantile(0.90)),
                fmt_opt(s.width_quantile(0.85)),
                fmt_opt(s.width_quantile(0.80)),
                fmt_opt(s.mean_fdr),
                fmt_opt(s.mean_risk),
            ],
        )?;
    }
    io::finish(path, w)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn experiment(a: &ExperimentArgs, argv: &[String]) -> Result<(), CliError> {
    let mb = ManifestBuilder::start("experiment", argv);
    let cfg = load_config(&a.config)?;
    let workers = a.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    let out = experiments::run_experiment(&cfg, workers)?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;

    let sweep: Vec<&EtaResult> = out.sweep.iter().collect();
    let path = |name: &str| a.out.join(name);
    write_records(&path("records.csv"), &sweep)?;
    write_summary(&path("summary.csv"), &sweep)?;
    write_plot(&path("plot_data.csv"), &sweep)?;
    let mut outputs = vec![
        output(&path("records.csv"), &RECORDS_HEADER),
        output(&path("summary.csv"), &SUMMARY_HEADER),
        output(&path("plot_data.csv"), &PLOT_HEADER),
    ];
    if let Some(b) = &out.baseline {
        write_records(&path("baseline_records.csv"), &[b])?;
        write_summary(&path("baseline_summary.csv"), &[b])?;
        outputs.push(output(&path("baseline_records.csv"), &RECORDS_HEADER));
        outputs.push(output(&path("baseline_summary.csv"), &SUMMARY_HEADER));
    }
    let config = json!({ "experiment": cfg, "workers": workers, "resolved_c1": out.c1 });
    mb.finish(config, Some(cfg.master_seed), outputs)
        .write(&path("manifest.json"))
}

pub fn budget(a: &BudgetArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if a.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    check_open_unit("delta", a.delta)?;
    let certs = selectors::certify_budgets(a.k, a.eta_step, a.delta)?;
    let mut text = format!("{BUDGET_HEADER}\n");
    for (name, b) in ["advanced", "simple"].iter().zip(&certs) {
        text += &format!("{name},{},{},{}\n", fmt_f64(b.eta), fmt_f64(b.tau), fmt_f64(b.nu));
    }
    if let Some(sp) = &a.sparse {
        let bad = || usage(format!("--sparse takes D S TAU, got {sp:?}"));
        let d: u64 = sp[0].parse().map_err(|_| bad())?;
        let s: u64 = sp[1].parse().map_err(|_| bad())?;
        let tau: f64 = sp[2].parse().map_err(|_| bad())?;
        let eta = stability::sparse_selection_eta(d, s, tau)?;
        text += &format!("sparse,{},{},0\n", fmt_f64(eta), fmt_f64(tau));
    }
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

const PATH_FLAGS: [&str; 5] = ["--x", "--y", "--selection", "--config", "--out"];

/// The recorded arguments with every path made absolute against `cwd` and
/// `--out` replaced by `out` if given.
pub fn rebase_argv(argv: &[String], cwd: &Path, out: Option<&Path>) -> Vec<String> {
    let fix = |flag: &str, value: &str| -> String {
        match (flag, out) {
            ("--out", Some(o)) => o.display().to_string(),
            _ => cwd.join(value).display().to_string(),
        }
    };
    let mut res = Vec::with_capacity(argv.len());
    let mut it = argv.iter();
    while let Some(arg) = it.next() {
        if let Some((flag, value)) = arg.split_once('=') {
            if PATH_FLAGS.contains(&flag) {
                res.push(format!("{flag}={}", fix(flag, value)));
                continue;
            }
        }
        res.push(arg.clone());
        if PATH_FLAGS.contains(&arg.as_str()) {
            if let Some(value) = it.next() {
                res.push(fix(arg, value));
            }
        }
    }
    res
}

pub fn replay(a: &ReplayArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    use clap::Parser;
    let m = RunManifest::read(&a.manifest)?;
    let argv = rebase_argv(&m.argv, &m.cwd, a.out.as_deref());
    let full: Vec<String> = std::iter::once("stable-posi".to_string()).chain(argv.iter().cloned()).collect();
    let cli = Cli::try_parse_from(&full).map_err(|e| CliError::Usage(e.to_string()))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(usage("a manifest cannot record a replay"));
    }
    dispatch(cli.command, &argv, stdout)
}
