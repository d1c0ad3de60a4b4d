//! `subdiff` — subdiffusion estimation from particle-tracking trajectories.
//!
//! Subcommands: `simulate` (synthetic experiments), `fit` (per-path MLE or
//! least squares), `msd` (ensemble MSD curves), `compare` (composite
//! likelihood scores), `coverage` (Monte Carlo CI coverage), `gle-window`
//! (GLE subdiffusion window). Positions are µm, times seconds; `--dt` is
//! always explicit. Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::{resolve, resolve_required, Config};
use subdiff::experiments::{compare_composite, coverage_study, simulate_experiment, SimKind, SimParams};
use subdiff::gle::{extract_window, gle_msd, log_spaced, GleSpec};
use subdiff::likelihood::{fit_mle, FitOptions, FitResult};
use subdiff::models::{ls_fit, DriftSpec, ModelKind, ModelSpec};
use subdiff::noise::{ArmaFilter, NoiseModel, SavinDoyleNoise};
use subdiff::seed::derive_seed;
use subdiff::tracks::{
    default_ls_max_lag, drift_subtract, empirical_msd, ensemble_msd, load_csv, TrajectorySet,
};

/// Marker for errors that should exit with the usage code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

#[derive(Parser)]
#[command(name = "subdiff", version, about)]
struct Cli {
    /// Flat key=value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (also honored via SUBDIFF_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a synthetic experiment and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Fit one model to every path of a trajectory CSV.
    Fit(FitArgs),
    /// Ensemble mean squared displacement of a trajectory CSV.
    Msd(MsdArgs),
    /// Composite-likelihood improvement scores over the fBM baseline.
    Compare(CompareArgs),
    /// Monte Carlo coverage study against a known simulation truth.
    Coverage(CoverageArgs),
    /// Subdiffusion window of a Rouse-kernel GLE.
    GleWindow(GleWindowArgs),
}

/// Generating-process description shared by `simulate` and `coverage`.
#[derive(Args, Clone)]
struct TruthArgs {
    /// Driving process: fbm, gle or empirical.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Noise filter for fbm truths: none, fma, fma2, farma, sd or fmas.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    rho2: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Savin-Doyle exposure time (seconds).
    #[arg(long)]
    tau: Option<f64>,
    /// Static noise scale sigma.
    #[arg(long)]
    sigma: Option<f64>,
    /// GLE mode count K.
    #[arg(long = "K")]
    modes: Option<usize>,
    #[arg(long)]
    rouse_gamma: Option<f64>,
    #[arg(long)]
    rouse_tau: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// Empirical-error ratio table (CSV lag,g).
    #[arg(long)]
    g_file: Option<PathBuf>,
    /// Noise amplification factor gamma of the empirical-error model.
    #[arg(long)]
    gamma_factor: Option<f64>,
    /// Lag N0 beyond which the g ratio is clamped to 1.
    #[arg(long)]
    n0: Option<usize>,
    /// Per-coordinate diffusivity scale D (Sigma = 2D·I).
    #[arg(long)]
    diff_coef: Option<f64>,
}

impl TruthArgs {
    fn to_kind(&self, cfg: &Config) -> anyhow::Result<SimKind> {
        let model = resolve(self.model.clone(), cfg.get_str("model"), "fbm".into());
        match model.as_str() {
            "fbm" => {
                let alpha = resolve_required(self.alpha, cfg.get_f64("alpha")?, "--alpha")
                    .map_err(|e| usage(e.to_string()))?;
                Ok(SimKind::FbmFilter {
                    alpha,
                    noise: self.noise_model(cfg)?,
                })
            }
            "gle" => Ok(SimKind::Gle(self.gle_spec(cfg)?)),
            "empirical" => {
                let alpha = resolve_required(self.alpha, cfg.get_f64("alpha")?, "--alpha")
                    .map_err(|e| usage(e.to_string()))?;
                let g_path = self
                    .g_file
                    .clone()
                    .or_else(|| cfg.get_str("g_file").map(PathBuf::from))
                    .ok_or_else(|| usage("empirical model needs --g-file"))?;
                let g_table = output::read_g_table(&g_path)?;
                let clamp = resolve(self.n0, cfg.get_usize("n0")?, g_table.len());
                Ok(SimKind::Empirical {
                    alpha,
                    g_table,
                    gamma_factor: resolve(self.gamma_factor, cfg.get_f64("gamma_factor")?, 1.0),
                    clamp_lag: clamp,
                })
            }
            other => Err(usage(format!("unknown simulation model {other:?}"))),
        }
    }

    fn gle_spec(&self, cfg: &Config) -> anyhow::Result<GleSpec> {
        Ok(GleSpec::new(
            resolve_required(self.modes, cfg.get_usize("K")?, "--K")
                .map_err(|e| usage(e.to_string()))?,
            resolve_required(self.rouse_gamma, cfg.get_f64("rouse_gamma")?, "--rouse-gamma")
                .map_err(|e| usage(e.to_string()))?,
            resolve_required(self.rouse_tau, cfg.get_f64("rouse_tau")?, "--rouse-tau")
                .map_err(|e| usage(e.to_string()))?,
            resolve_required(self.nu, cfg.get_f64("nu")?, "--nu")
                .map_err(|e| usage(e.to_string()))?,
        )?)
    }

    fn noise_model(&self, cfg: &Config) -> anyhow::Result<NoiseModel> {
        let noise = resolve(self.noise.clone(), cfg.get_str("noise"), "none".into());
        let rho = resolve(self.rho, cfg.get_f64("rho")?, f64::NAN);
        let sigma = resolve(self.sigma, cfg.get_f64("sigma")?, f64::NAN);
        let need = |v: f64, flag: &str| -> anyhow::Result<f64> {
            if v.is_nan() {
                Err(usage(format!("noise model {noise:?} needs {flag}")))
            } else {
                Ok(v)
            }
        };
        Ok(match noise.as_str() {
            "none" => NoiseModel::None,
            "fma" => NoiseModel::Arma(ArmaFilter::ma1(need(rho, "--rho")?)?),
            "fma2" => {
                let rho2 = resolve_required(self.rho2, cfg.get_f64("rho2")?, "--rho2")
                    .map_err(|e| usage(e.to_string()))?;
                NoiseModel::Arma(ArmaFilter::new(vec![], vec![need(rho, "--rho")?, rho2])?)
            }
            "farma" | "farma11" => {
                let theta = resolve_required(self.theta, cfg.get_f64("theta")?, "--theta")
                    .map_err(|e| usage(e.to_string()))?;
                NoiseModel::Arma(ArmaFilter::new(vec![theta], vec![need(rho, "--rho")?])?)
            }
            "sd" => {
                let tau = resolve_required(self.tau, cfg.get_f64("tau")?, "--tau")
                    .map_err(|e| usage(e.to_string()))?;
                NoiseModel::SavinDoyle(SavinDoyleNoise::new(tau, need(sigma, "--sigma")?)?)
            }
            "fmas" => NoiseModel::ArmaStatic {
                filter: ArmaFilter::ma1(need(rho, "--rho")?)?,
                static_scale: need(sigma, "--sigma")?,
            },
            other => return Err(usage(format!("unknown noise model {other:?}"))),
        })
    }

    fn describe(&self, kind: &SimKind, d_coef: f64) -> serde_json::Value {
        match kind {
            SimKind::FbmFilter { alpha, noise } => serde_json::json!({
                "model": "fbm",
                "alpha": alpha,
                "noise": noise_description(noise),
                "diff_coef": d_coef,
            }),
            SimKind::Gle(spec) => serde_json::json!({
                "model": "gle",
                "K": spec.modes,
                "rouse_gamma": spec.rouse_gamma,
                "rouse_tau": spec.rouse_tau,
                "nu": spec.nu,
                "kt": spec.kt,
                "diff_coef": d_coef,
            }),
            SimKind::Empirical { alpha, g_table, gamma_factor, clamp_lag } => serde_json::json!({
                "model": "empirical",
                "alpha": alpha,
                "gamma_factor": gamma_factor,
                "n0": clamp_lag,
                "g_table_len": g_table.len(),
                "diff_coef": d_coef,
            }),
        }
    }
}

fn noise_description(noise: &NoiseModel) -> serde_json::Value {
    match noise {
        NoiseModel::None => serde_json::json!({"kind": "none"}),
        NoiseModel::Arma(f) => serde_json::json!({
            "kind": "arma", "theta": f.theta(), "rho": f.rho(), "rho0": f.rho0(),
        }),
        NoiseModel::SavinDoyle(sd) => serde_json::json!({
            "kind": "sd", "tau": sd.exposure_time, "sigma": sd.static_scale,
        }),
        NoiseModel::ArmaStatic { filter, static_scale } => serde_json::json!({
            "kind": "fmas", "rho": filter.rho(), "rho0": filter.rho0(), "sigma": static_scale,
        }),
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    truth: TruthArgs,
    /// Increments per path (N).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output trajectory CSV; generating parameters go to a .params.json sidecar.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// ls, fbm, fsd, fma, fma2, farma11 or fmas.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Drift regressors: none, linear or quadratic.
    #[arg(long)]
    drift: Option<String>,
    /// Fix the Savin-Doyle exposure time instead of estimating it.
    #[arg(long)]
    fix_tau: Option<f64>,
    /// Fraction of MSD lags kept by the ls estimator.
    #[arg(long)]
    ls_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MsdArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Maximum lag; defaults to 30% of the longest path.
    #[arg(long)]
    max_lag: Option<usize>,
    /// Subtract per-path linear drift before averaging.
    #[arg(long, default_value_t = false)]
    drift_correct: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated models to score against the fbm baseline.
    #[arg(long)]
    models: String,
    /// Comma-separated downsampling factors.
    #[arg(long, default_value = "5,10,20,60")]
    r: String,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    drift: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; a .json twin is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    truth: TruthArgs,
    /// Comma-separated models to fit on every replicate.
    #[arg(long)]
    models: String,
    /// Monte Carlo replicates B.
    #[arg(long, short = 'B')]
    replicates: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    drift: Option<String>,
    /// Output CSV (model,metric,value); a .json twin mirrors the full report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GleWindowArgs {
    #[arg(long = "K")]
    modes: Option<usize>,
    #[arg(long)]
    rouse_gamma: Option<f64>,
    #[arg(long)]
    rouse_tau: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// Power-law tolerance of the window search.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the MSD curve the window was extracted from.
    #[arg(long)]
    msd_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => Config::load(path).map_err(|e| usage(format!("{e:#}")))?,
        None => Config::default(),
    };

    let threads = cli
        .threads
        .or(cfg.get_usize("threads").map_err(|e| usage(e.to_string()))?)
        .or_else(|| {
            std::env::var("SUBDIFF_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        });
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .ok();
    }

    match cli.cmd {
        Cmd::Simulate(args) => cmd_simulate(args, &cfg),
        Cmd::Fit(args) => cmd_fit(args, &cfg),
        Cmd::Msd(args) => cmd_msd(args, &cfg),
        Cmd::Compare(args) => cmd_compare(args, &cfg),
        Cmd::Coverage(args) => cmd_coverage(args, &cfg),
        Cmd::GleWindow(args) => cmd_gle_window(args, &cfg),
    }
}

fn common_dims(
    dt: Option<f64>,
    dim: Option<usize>,
    seed: Option<u64>,
    cfg: &Config,
) -> anyhow::Result<(f64, usize, u64)> {
    let dt = resolve_required(dt, cfg.get_f64("dt")?, "--dt").map_err(|e| usage(e.to_string()))?;
    let dim = resolve(dim, cfg.get_usize("dim")?, 2);
    let seed = resolve(seed, cfg.get_u64("seed")?, 0);
    // The negation also rejects NaN from a config file.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(dt > 0.0) {
        return Err(usage("--dt must be positive"));
    }
    if !(1..=3).contains(&dim) {
        return Err(usage("--dim must be 1, 2 or 3"));
    }
    Ok((dt, dim, seed))
}

fn check_parent_writable(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(usage(format!(
                "output directory {} does not exist",
                dir.display()
            )));
        }
    }
    Ok(())
}

fn load_input(path: &Path, dt: f64, dim: usize) -> anyhow::Result<TrajectorySet> {
    if !path.is_file() {
        return Err(usage(format!("input file {} does not exist", path.display())));
    }
    Ok(load_csv(path, dt, dim)?)
}

fn parse_drift(drift: Option<String>, cfg: &Config) -> anyhow::Result<DriftSpec> {
    let raw = resolve(drift, cfg.get_str("drift"), "linear".into());
    match raw.as_str() {
        "none" => Ok(DriftSpec::None),
        "linear" => Ok(DriftSpec::Linear),
        "quadratic" => Ok(DriftSpec::Quadratic),
        other => Err(usage(format!("unknown drift spec {other:?}"))),
    }
}

fn parse_model_list(raw: &str) -> anyhow::Result<Vec<ModelKind>> {
    raw.split(',')
        .map(|s| ModelKind::parse(s.trim()).map_err(|e| usage(e.to_string())))
        .collect()
}

fn cmd_simulate(args: SimulateArgs, cfg: &Config) -> anyhow::Result<()> {
    let (dt, dim, seed) = common_dims(args.dt, args.dim, args.seed, cfg)?;
    check_parent_writable(&args.out)?;
    let kind = args.truth.to_kind(cfg)?;
    let params = SimParams {
        kind,
        d_coef: resolve(args.truth.diff_coef, cfg.get_f64("diff_coef")?, 0.5),
        n_increments: resolve_required(args.n, cfg.get_usize("n")?, "--n")
            .map_err(|e| usage(e.to_string()))?,
        dt,
        dim,
        n_paths: resolve(args.paths, cfg.get_usize("paths")?, 1),
        seed,
    };
    let set = simulate_experiment(&params).context("simulation failed")?;
    output::write_tracks_csv(&args.out, &set)?;

    let sidecar = args.out.with_extension("params.json");
    let doc = serde_json::json!({
        "schema": "subdiff-simulate-params-v1",
        "generator": args.truth.describe(&params.kind, params.d_coef),
        "n": params.n_increments,
        "paths": params.n_paths,
        "dt": params.dt,
        "dim": params.dim,
        "seed": params.seed,
    });
    output::write_json(&sidecar, &doc)?;
    println!(
        "wrote {} paths ({} increments each) to {}",
        params.n_paths,
        params.n_increments,
        args.out.display()
    );
    Ok(())
}

fn cmd_fit(args: FitArgs, cfg: &Config) -> anyhow::Result<()> {
    let (dt, dim, seed) = common_dims(args.dt, args.dim, args.seed, cfg)?;
    check_parent_writable(&args.out)?;
    let model = resolve(args.model.clone(), cfg.get_str("fit_model"), "fbm".into());
    let kind = ModelKind::parse(&model).map_err(|e| usage(e.to_string()))?;
    let drift = parse_drift(args.drift.clone(), cfg)?;
    let ls_frac = resolve(args.ls_frac, cfg.get_f64("ls_frac")?, 0.3);
    let mut spec = ModelSpec::new(kind).with_drift(drift);
    spec.ls_truncation = ls_frac;
    if let Some(tau) = args.fix_tau.or(cfg.get_f64("fix_tau")?) {
        spec = spec.with_fixed_tau(tau);
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;

    let set = load_input(&args.input, dt, dim)?;
    let records: Vec<serde_json::Value> = set
        .paths()
        .par_iter()
        .enumerate()
        .map(|(idx, path)| fit_one_path(&spec, path, dt, derive_seed(seed, "fit", idx as u64)))
        .collect();

    let succeeded = records.iter().filter(|r| r["error"].is_null()).count();
    let doc = serde_json::json!({
        "schema": "subdiff-fit-v1",
        "model": kind.name(),
        "drift": format!("{drift:?}").to_lowercase(),
        "dt": dt,
        "dim": dim,
        "seed": seed,
        "ls_truncation": if kind == ModelKind::Ls { Some(ls_frac) } else { None },
        "fixed_tau": spec.fixed_tau,
        "paths": records,
    });
    output::write_json(&args.out, &doc)?;
    println!(
        "fit {} of {} paths with {} -> {}",
        succeeded,
        set.len(),
        kind.name(),
        args.out.display()
    );
    if succeeded == 0 {
        anyhow::bail!("every path failed to fit");
    }
    Ok(())
}

fn fit_one_path(
    spec: &ModelSpec,
    path: &subdiff::tracks::TrajPath,
    dt: f64,
    seed: u64,
) -> serde_json::Value {
    if spec.kind == ModelKind::Ls {
        let n = path.positions.nrows() - 1;
        // The 30% discard convention enters through the max lag itself;
        // ls_truncation rescales it when the caller overrides the default.
        let max_lag = ((n as f64 * spec.ls_truncation).floor() as usize).clamp(3, n);
        let result = empirical_msd(&drift_subtract(&path.positions), max_lag)
            .and_then(|msd| ls_fit(&msd, dt));
        return match result {
            Ok(fit) => serde_json::json!({
                "id": path.id,
                "model": "ls",
                "alpha": fit.alpha,
                "d_coef": fit.d_coef,
                "params": { "ls_truncation": spec.ls_truncation, "max_lag": max_lag },
                "error": null,
            }),
            Err(e) => serde_json::json!({ "id": path.id, "model": "ls", "error": e.to_string() }),
        };
    }

    let opts = FitOptions {
        seed,
        ..FitOptions::default()
    };
    match fit_mle(spec, &path.positions, dt, &opts) {
        Ok(fit) => fit_record(&path.id, &fit),
        Err(e) => serde_json::json!({
            "id": path.id,
            "model": spec.kind.name(),
            "error": e.to_string(),
        }),
    }
}

fn fit_record(id: &str, fit: &FitResult) -> serde_json::Value {
    serde_json::json!({
        "id": id,
        "model": fit.model,
        "alpha": fit.alpha,
        "d_coef": fit.d_coef,
        "se_alpha": fit.se_alpha,
        "se_log_d": fit.se_log_d,
        "ci_alpha": [fit.ci_alpha.0, fit.ci_alpha.1],
        "ci_log_d": [fit.ci_log_d.0, fit.ci_log_d.1],
        "loglik": fit.loglik,
        "params": fit.params,
        "beta": fit.beta,
        "sigma": fit.sigma,
        "convergence": {
            "converged": fit.converged,
            "boundary": fit.boundary,
            "n_evals": fit.n_evals,
        },
        "error": null,
    })
}

fn cmd_msd(args: MsdArgs, cfg: &Config) -> anyhow::Result<()> {
    let dt = resolve_required(args.dt, cfg.get_f64("dt")?, "--dt").map_err(|e| usage(e.to_string()))?;
    let dim = resolve(args.dim, cfg.get_usize("dim")?, 2);
    check_parent_writable(&args.out)?;
    let set = load_input(&args.input, dt, dim)?;
    let longest = set
        .paths()
        .iter()
        .map(|p| p.positions.nrows() - 1)
        .max()
        .unwrap_or(1);
    let max_lag = resolve(args.max_lag, cfg.get_usize("max_lag")?, default_ls_max_lag(longest))
        .min(longest)
        .max(1);
    let msd = ensemble_msd(&set, max_lag, args.drift_correct)?;
    output::write_msd_csv(&args.out, &msd, dt)?;
    println!("wrote {} lags to {}", msd.len(), args.out.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs, cfg: &Config) -> anyhow::Result<()> {
    let (dt, dim, seed) = common_dims(args.dt, args.dim, args.seed, cfg)?;
    check_parent_writable(&args.out)?;
    let drift = parse_drift(args.drift.clone(), cfg)?;
    let mut kinds = parse_model_list(&args.models)?;
    if !kinds.contains(&ModelKind::Fbm) {
        kinds.insert(0, ModelKind::Fbm);
    }
    if kinds.contains(&ModelKind::Ls) {
        return Err(usage("the ls estimator has no likelihood and cannot be compared"));
    }
    let r_list: Vec<usize> = args
        .r
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| usage(format!("bad downsampling factor {s:?}")))
        })
        .collect::<anyhow::Result<_>>()?;

    let set = load_input(&args.input, dt, dim)?;
    let mut fits: Vec<(String, Vec<FitResult>)> = Vec::new();
    for kind in &kinds {
        let spec = ModelSpec::new(*kind).with_drift(drift);
        let model_fits: Vec<FitResult> = set
            .paths()
            .par_iter()
            .enumerate()
            .map(|(idx, path)| {
                let opts = FitOptions {
                    seed: derive_seed(seed, kind.name(), idx as u64),
                    ..FitOptions::default()
                };
                fit_mle(&spec, &path.positions, dt, &opts)
            })
            .collect::<subdiff::Result<_>>()?;
        fits.push((kind.name().to_string(), model_fits));
    }

    let (rows, baselines) = compare_composite(&set, &fits, &r_list, drift)?;
    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{},{}", r.model, r.r, r.s_r))
        .collect();
    output::write_csv_rows(&args.out, "subdiff compare csv v1", "model,r,s_r", &csv_rows)?;
    let doc = serde_json::json!({
        "schema": "subdiff-compare-v1",
        "dt": dt,
        "drift": format!("{drift:?}").to_lowercase(),
        "fbm_baseline": baselines,
        "rows": rows,
    });
    output::write_json(&args.out.with_extension("json"), &doc)?;
    println!("wrote {} score rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_coverage(args: CoverageArgs, cfg: &Config) -> anyhow::Result<()> {
    let (dt, dim, seed) = common_dims(args.dt, args.dim, args.seed, cfg)?;
    check_parent_writable(&args.out)?;
    let drift = parse_drift(args.drift.clone(), cfg)?;
    let kind = args.truth.to_kind(cfg)?;
    let truth = SimParams {
        kind,
        d_coef: resolve(args.truth.diff_coef, cfg.get_f64("diff_coef")?, 0.5),
        n_increments: resolve(args.n, cfg.get_usize("n")?, 900),
        dt,
        dim,
        n_paths: resolve(args.replicates, cfg.get_usize("replicates")?, 200),
        seed,
    };
    let specs: Vec<ModelSpec> = parse_model_list(&args.models)?
        .into_iter()
        .map(|k| ModelSpec::new(k).with_drift(drift))
        .collect();
    let opts = FitOptions {
        seed: derive_seed(seed, "coverage", 0),
        ..FitOptions::default()
    };
    let report = coverage_study(&truth, &specs, &opts)?;

    let mut csv_rows = vec![
        format!("truth,alpha,{}", report.truth_alpha),
        format!("truth,log_d,{}", report.truth_log_d),
        format!("truth,replicates,{}", report.replicates),
    ];
    for row in &report.rows {
        csv_rows.push(format!("{},mean_alpha,{}", row.model, row.mean_alpha));
        csv_rows.push(format!("{},mean_log_d,{}", row.model, row.mean_log_d));
        csv_rows.push(format!("{},p95_alpha,{}", row.model, row.p95_alpha));
        csv_rows.push(format!("{},p95_log_d,{}", row.model, row.p95_log_d));
        csv_rows.push(format!("{},n_fit,{}", row.model, row.n_fit));
        csv_rows.push(format!("{},failures,{}", row.model, row.failures));
    }
    output::write_csv_rows(&args.out, "subdiff coverage csv v1", "model,metric,value", &csv_rows)?;
    output::write_json(
        &args.out.with_extension("json"),
        &serde_json::json!({
            "schema": "subdiff-coverage-v1",
            "report": report,
        }),
    )?;
    for row in &report.rows {
        println!(
            "{}: mean alpha {:.4}, P95(alpha) {:.3}, failures {}",
            row.model, row.mean_alpha, row.p95_alpha, row.failures
        );
    }
    Ok(())
}

fn cmd_gle_window(args: GleWindowArgs, cfg: &Config) -> anyhow::Result<()> {
    check_parent_writable(&args.out)?;
    let spec = GleSpec::new(
        resolve_required(args.modes, cfg.get_usize("K")?, "--K")
            .map_err(|e| usage(e.to_string()))?,
        resolve_required(args.rouse_gamma, cfg.get_f64("rouse_gamma")?, "--rouse-gamma")
            .map_err(|e| usage(e.to_string()))?,
        resolve_required(args.rouse_tau, cfg.get_f64("rouse_tau")?, "--rouse-tau")
            .map_err(|e| usage(e.to_string()))?,
        resolve_required(args.nu, cfg.get_f64("nu")?, "--nu")
            .map_err(|e| usage(e.to_string()))?,
    )?;
    let kappa = resolve(args.kappa, cfg.get_f64("kappa")?, 0.01);
    let points = resolve(args.grid_points, cfg.get_usize("grid_points")?, 512);
    if points < 8 {
        return Err(usage("--grid-points must be at least 8"));
    }

    let lo = spec.rouse_tau / 100.0;
    let hi = 100.0 * (spec.modes as f64).powf(spec.rouse_gamma) * spec.rouse_tau;
    let grid = log_spaced(lo, hi, points);
    let msd = gle_msd(&spec, &grid)?;
    let window = extract_window(&grid, &msd, kappa)?;

    output::write_json(
        &args.out,
        &serde_json::json!({
            "schema": "subdiff-window-v1",
            "spec": spec,
            "grid_points": points,
            "window": window,
        }),
    )?;
    if let Some(msd_out) = &args.msd_out {
        check_parent_writable(msd_out)?;
        let rows: Vec<String> = grid
            .iter()
            .zip(&msd)
            .map(|(t, v)| format!("{t},{v}"))
            .collect();
        output::write_csv_rows(msd_out, "subdiff gle msd csv v1", "t_seconds,msd_um2", &rows)?;
    }
    println!(
        "window: t in [{:.4}, {:.4}] s, alpha_eff = {:.4}, D_eff = {:.4}",
        window.t_min, window.t_max, window.alpha_eff, window.d_eff
    );
    Ok(())
}
