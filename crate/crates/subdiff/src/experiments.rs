//! Simulation harnesses: synthetic experiments, confidence-interval coverage
//! studies, and composite-likelihood model comparison.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csi::{msd_to_acf, CsiKernel};
use crate::error::{Error, Result};
use crate::gle::{default_window_grid, extract_window, gle_msd, GleSpec};
use crate::likelihood::{fit_mle, matnorm_loglik, FitOptions, FitResult, MatNormModel};
use crate::models::{ls_fit, DriftSpec, ModelKind, ModelSpec};
use crate::noise::{observed_increment_acf, NoiseModel};
use crate::seed::derive_seed;
use crate::toeplitz::simulate_stationary;
use crate::tracks::{default_ls_max_lag, drift_subtract, empirical_msd, TrajPath, TrajectorySet};

/// What generates the true observed-increment law of a synthetic experiment.
#[derive(Debug, Clone)]
pub enum SimKind {
    /// fBM driving kernel pushed through a noise filter.
    FbmFilter { alpha: f64, noise: NoiseModel },
    /// Empirical-error model: MSD_Y(n) = (γ·ĝ(n) − γ + 1)·MSD_X(n) with
    /// ĝ clamped to 1 beyond `clamp_lag`. `g_table[i]` is ĝ(i+1).
    Empirical {
        alpha: f64,
        g_table: Vec<f64>,
        gamma_factor: f64,
        clamp_lag: usize,
    },
    /// Rouse-kernel GLE trajectories.
    Gle(GleSpec),
}

/// Complete description of one synthetic experiment.
#[derive(Debug, Clone)]
pub struct SimParams {
    pub kind: SimKind,
    /// Per-coordinate diffusivity scale: the simulated increments have
    /// covariance 2·d_coef·V, i.e. Σ = 2·d_coef·I and MSD = 2·d_coef·η.
    /// 0.5 reproduces the Σ = I studies.
    pub d_coef: f64,
    pub n_increments: usize,
    pub dt: f64,
    pub dim: usize,
    pub n_paths: usize,
    pub seed: u64,
}

impl SimParams {
    fn validate(&self) -> Result<()> {
        if !(self.d_coef > 0.0) {
            return Err(Error::invalid("d_coef must be positive"));
        }
        if self.n_increments < 2 || self.n_paths == 0 {
            return Err(Error::invalid("need at least 2 increments and 1 path"));
        }
        if !(self.dt > 0.0) || !(1..=3).contains(&self.dim) {
            return Err(Error::invalid("invalid dt or dim"));
        }
        Ok(())
    }

    /// Increment ACF of the observed process this experiment generates.
    pub fn observed_acf(&self) -> Result<crate::toeplitz::AcfSeq> {
        let n = self.n_increments;
        let acf = match &self.kind {
            SimKind::FbmFilter { alpha, noise } => {
                observed_increment_acf(&CsiKernel::fbm(*alpha)?, noise, self.dt, n)?
            }
            SimKind::Empirical {
                alpha,
                g_table,
                gamma_factor,
                clamp_lag,
            } => {
                let mut msd = Vec::with_capacity(n + 1);
                msd.push(0.0);
                for lag in 1..=n {
                    let g = if lag > *clamp_lag {
                        1.0
                    } else {
                        g_table.get(lag - 1).copied().unwrap_or(1.0)
                    };
                    let base = (lag as f64 * self.dt).powf(*alpha);
                    msd.push((gamma_factor * g - gamma_factor + 1.0) * base);
                }
                msd_to_acf(&msd, self.dt)?
            }
            SimKind::Gle(spec) => CsiKernel::Gle(spec.clone()).increment_acf(n, self.dt)?,
        };
        acf.scaled(2.0 * self.d_coef)
    }

    /// True (α, log D) of the experiment, for coverage scoring. For the GLE
    /// the effective values come from the extracted subdiffusion window.
    pub fn truth(&self) -> Result<(f64, f64)> {
        match &self.kind {
            SimKind::FbmFilter { alpha, .. } | SimKind::Empirical { alpha, .. } => {
                Ok((*alpha, self.d_coef.ln()))
            }
            SimKind::Gle(spec) => {
                let grid = default_window_grid(spec);
                let msd = gle_msd(spec, &grid)?;
                let w = extract_window(&grid, &msd, 0.01)?;
                Ok((w.alpha_eff, (2.0 * self.d_coef * w.d_eff).ln()))
            }
        }
    }
}

/// Simulates the experiment: exact stationary Gaussian increments from the
/// observed ACF, cumulatively summed from the origin. Bit-reproducible given
/// the seed, independent of thread count.
pub fn simulate_experiment(params: &SimParams) -> Result<TrajectorySet> {
    params.validate()?;
    let acf = params.observed_acf()?;
    let incs = simulate_stationary(&acf, params.n_paths, params.dim, params.seed)?;
    let width = (params.n_paths.max(2) - 1).to_string().len();
    let paths = incs
        .into_iter()
        .enumerate()
        .map(|(i, inc)| {
            let (n, k) = inc.dim();
            let mut pos = Array2::<f64>::zeros((n + 1, k));
            for c in 0..k {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += inc[[r, c]];
                    pos[[r + 1, c]] = acc;
                }
            }
            TrajPath {
                id: format!("sim{i:0width$}"),
                positions: pos,
            }
        })
        .collect();
    TrajectorySet::new(params.dt, params.dim, paths)
}

/// One model's row of a coverage study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageRow {
    pub model: String,
    pub mean_alpha: f64,
    pub mean_log_d: f64,
    /// Fraction of replicates whose nominal 95% CI covered the truth.
    pub p95_alpha: f64,
    pub p95_log_d: f64,
    pub n_fit: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub truth_alpha: f64,
    pub truth_log_d: f64,
    pub replicates: usize,
    pub rows: Vec<CoverageRow>,
}

/// Simulates `truth.n_paths` replicates and scores each model's point
/// estimates and 95% CI coverage against the known truth. Replicates run in
/// parallel with per-replicate seeds; failures are counted, never dropped
/// silently.
pub fn coverage_study(
    truth: &SimParams,
    models: &[ModelSpec],
    opts: &FitOptions,
) -> Result<CoverageReport> {
    let set = simulate_experiment(truth)?;
    let (alpha_true, log_d_true) = truth.truth()?;
    let mut rows = Vec::with_capacity(models.len());

    for spec in models {
        spec.validate()?;
        let fits: Vec<Result<(f64, f64, f64, f64)>> = set
            .paths()
            .par_iter()
            .enumerate()
            .map(|(b, path)| {
                if spec.kind == ModelKind::Ls {
                    let n = path.positions.nrows() - 1;
                    let lag = default_ls_max_lag(n);
                    let msd = empirical_msd(&drift_subtract(&path.positions), lag)?;
                    let fit = ls_fit(&msd.truncated_fraction(1.0)?, set.dt())?;
                    return Ok((fit.alpha, fit.d_coef.ln(), f64::NAN, f64::NAN));
                }
                let fit_opts = FitOptions {
                    seed: derive_seed(opts.seed, "coverage-fit", b as u64),
                    ..opts.clone()
                };
                let fit = fit_mle(spec, &path.positions, set.dt(), &fit_opts)?;
                if !fit.se_alpha.is_finite() || !fit.se_log_d.is_finite() {
                    return Err(Error::invalid(
                        "standard errors unavailable (boundary fit)",
                    ));
                }
                Ok((fit.alpha, fit.d_coef.ln(), fit.se_alpha, fit.se_log_d))
            })
            .collect();

        let mut n_fit = 0usize;
        let mut failures = 0usize;
        let (mut sa, mut sd) = (0.0, 0.0);
        let (mut cov_a, mut cov_d) = (0usize, 0usize);
        let mut any_se = false;
        for r in fits {
            match r {
                Ok((alpha, log_d, se_a, se_d)) => {
                    n_fit += 1;
                    sa += alpha;
                    sd += log_d;
                    if se_a.is_finite() {
                        any_se = true;
                        if (alpha - alpha_true).abs() <= 1.96 * se_a {
                            cov_a += 1;
                        }
                        if (log_d - log_d_true).abs() <= 1.96 * se_d {
                            cov_d += 1;
                        }
                    }
                }
                Err(_) => failures += 1,
            }
        }
        if n_fit == 0 {
            return Err(Error::invalid(format!(
                "model {} failed on every replicate",
                spec.kind.name()
            )));
        }
        rows.push(CoverageRow {
            model: spec.kind.name().to_string(),
            mean_alpha: sa / n_fit as f64,
            mean_log_d: sd / n_fit as f64,
            p95_alpha: if any_se {
                cov_a as f64 / n_fit as f64
            } else {
                f64::NAN
            },
            p95_log_d: if any_se {
                cov_d as f64 / n_fit as f64
            } else {
                f64::NAN
            },
            n_fit,
            failures,
        });
    }

    Ok(CoverageReport {
        truth_alpha: alpha_true,
        truth_log_d: log_d_true,
        replicates: truth.n_paths,
        rows,
    })
}

/// Index phases of r-fold downsampling: phase k holds {k, k+r, k+2r, …}.
/// The phases partition 0..=n_positions−1.
pub fn downsample_indices(n_positions: usize, r: usize) -> Vec<Vec<usize>> {
    let mut phases = vec![Vec::with_capacity(n_positions / r + 1); r];
    for i in 0..n_positions {
        phases[i % r].push(i);
    }
    phases
}

/// Composite fBM log-likelihood ℓ_C^r: the plain fBM location-scale
/// log-likelihood summed over the r downsampling phases, evaluated at fixed
/// (α, β, Σ), with no re-optimization.
pub fn composite_loglik(
    positions: &Array2<f64>,
    dt: f64,
    alpha: f64,
    beta: Option<&Array2<f64>>,
    sigma: &Array2<f64>,
    drift: DriftSpec,
    r: usize,
) -> Result<f64> {
    let rows = positions.nrows();
    let n = rows - 1;
    if r == 0 {
        return Err(Error::invalid("downsampling factor must be >= 1"));
    }
    if 4 * r >= n {
        return Err(Error::invalid(format!(
            "downsampling factor {r} leaves too few points (N = {n})"
        )));
    }
    let phases = downsample_indices(rows, r);
    debug_assert_eq!(phases.iter().map(Vec::len).sum::<usize>(), rows);

    let kernel = CsiKernel::fbm(alpha)?;
    let k = positions.ncols();
    let d = drift.dim();
    let mut total = 0.0;
    for phase in &phases {
        if phase.len() < 2 {
            continue;
        }
        let m = phase.len() - 1;
        let sub = Array2::from_shape_fn((phase.len(), k), |(i, c)| positions[[phase[i], c]]);
        let inc = crate::likelihood::increments_of(&sub);
        let acf = kernel.increment_acf(m, dt * r as f64)?;
        let drift_mat = (d > 0).then(|| {
            Array2::from_shape_fn((m, d), |(i, j)| {
                let t0 = phase[i] as f64 * dt;
                let t1 = phase[i + 1] as f64 * dt;
                if j == 0 {
                    t1 - t0
                } else {
                    t1 * t1 - t0 * t0
                }
            })
        });
        let model = MatNormModel::new(inc, acf, drift_mat)?;
        total += matnorm_loglik(&model, beta, sigma)?;
    }
    Ok(total)
}

/// Improvement score of each model over the fBM baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositeRow {
    pub model: String,
    pub r: usize,
    /// Mean over paths of ℓ_C^r(model MLE) − ℓ_C^r(fbm MLE).
    pub s_r: f64,
}

/// Mean composite log-likelihood of the fBM baseline at one downsampling
/// factor, reported alongside the improvement scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositeBaseline {
    pub r: usize,
    pub mean_loglik: f64,
}

/// Composite-likelihood comparison: `fits` maps model name → per-path fit
/// results aligned with `set.paths()`, and must contain the "fbm" baseline.
pub fn compare_composite(
    set: &TrajectorySet,
    fits: &[(String, Vec<FitResult>)],
    r_list: &[usize],
    drift: DriftSpec,
) -> Result<(Vec<CompositeRow>, Vec<CompositeBaseline>)> {
    let baseline = fits
        .iter()
        .find(|(name, _)| name == "fbm")
        .ok_or_else(|| Error::invalid("composite comparison needs an fbm baseline fit"))?;
    for (name, model_fits) in fits {
        if model_fits.len() != set.len() {
            return Err(Error::invalid(format!(
                "model {name} has {} fits for {} paths",
                model_fits.len(),
                set.len()
            )));
        }
    }

    let score = |fit: &FitResult, path: &TrajPath, r: usize| -> Result<f64> {
        composite_loglik(
            &path.positions,
            set.dt(),
            fit.alpha,
            fit.beta_array().as_ref(),
            &fit.sigma_array(),
            drift,
            r,
        )
    };

    let mut rows = Vec::new();
    let mut baselines = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let base_scores: Vec<f64> = set
            .paths()
            .par_iter()
            .zip(&baseline.1)
            .map(|(path, fit)| score(fit, path, r))
            .collect::<Result<_>>()?;
        baselines.push(CompositeBaseline {
            r,
            mean_loglik: base_scores.iter().sum::<f64>() / base_scores.len() as f64,
        });
        for (name, model_fits) in fits {
            if name == "fbm" {
                continue;
            }
            let deltas: Vec<f64> = set
                .paths()
                .par_iter()
                .zip(model_fits)
                .zip(&base_scores)
                .map(|((path, fit), base)| score(fit, path, r).map(|s| s - base))
                .collect::<Result<_>>()?;
            rows.push(CompositeRow {
                model: name.clone(),
                r,
                s_r: deltas.iter().sum::<f64>() / deltas.len() as f64,
            });
        }
    }
    Ok((rows, baselines))
}
