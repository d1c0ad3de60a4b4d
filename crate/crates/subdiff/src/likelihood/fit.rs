//! Numerical maximum likelihood over kernel/noise parameters.
//!
//! The optimizer runs on the profile likelihood in unconstrained coordinates:
//! α = 2·logistic(a), the MA(1) coefficient is logistic-scaled onto (−1, ½),
//! τ = Δt·logistic(u), σ = exp(s); MA(2) and ARMA(1,1) coefficient pairs stay
//! raw with constraint violations rejected by penalty. Standard errors come
//! from the observed Fisher information: a central-difference Hessian of the
//! full log-likelihood in (φ, β, Σ) at the MLE, with Σ in log-Cholesky
//! coordinates, then the delta method back to (α, log D).

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ls_fit, DriftSpec, ModelKind, ModelSpec, Phi};
use crate::optim::{minimize, NmOptions, PENALTY};
use crate::tracks::{default_ls_max_lag, drift_subtract, empirical_msd};

use super::{matnorm_loglik, profile_mle, MatNormModel};

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Simplex restarts from jittered starts.
    pub restarts: usize,
    /// Simplex-diameter convergence tolerance in transformed space.
    pub diam_tol: f64,
    /// Relative step for the observed-information Hessian.
    pub hessian_step: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 10,
            diam_tol: 1e-8,
            hessian_step: 1e-4,
            seed: 0,
        }
    }
}

/// Maximum-likelihood output for one path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    /// Kernel/noise parameters on the natural scale.
    pub params: BTreeMap<String, f64>,
    pub alpha: f64,
    /// D̂ = tr(Σ̂)/(2k), µm²·s^−α.
    pub d_coef: f64,
    pub se_alpha: f64,
    pub se_log_d: f64,
    pub ci_alpha: (f64, f64),
    pub ci_log_d: (f64, f64),
    pub loglik: f64,
    pub beta: Option<Vec<Vec<f64>>>,
    pub sigma: Vec<Vec<f64>>,
    /// Inverse observed Fisher information in the transformed coordinates
    /// named by `vcov_names`.
    pub vcov: Vec<Vec<f64>>,
    pub vcov_names: Vec<String>,
    pub converged: bool,
    /// Set when a parameter saturated its transform or the observed
    /// information was not positive definite at the optimum.
    pub boundary: bool,
    pub n_evals: usize,
}

impl FitResult {
    pub fn sigma_array(&self) -> Array2<f64> {
        let k = self.sigma.len();
        Array2::from_shape_fn((k, k), |(i, j)| self.sigma[i][j])
    }

    pub fn beta_array(&self) -> Option<Array2<f64>> {
        self.beta.as_ref().map(|b| {
            let d = b.len();
            let k = b[0].len();
            Array2::from_shape_fn((d, k), |(i, j)| b[i][j])
        })
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn phi_dim(kind: ModelKind, fixed_tau: bool) -> usize {
    match kind {
        ModelKind::Fbm => 1,
        ModelKind::Fma => 2,
        ModelKind::Fsd => {
            if fixed_tau {
                2
            } else {
                3
            }
        }
        ModelKind::Fma2 | ModelKind::Farma11 | ModelKind::Fmas => 3,
        ModelKind::Ls => 0,
    }
}

fn phi_names(kind: ModelKind, fixed_tau: bool) -> Vec<&'static str> {
    match kind {
        ModelKind::Fbm => vec!["alpha"],
        ModelKind::Fma => vec!["alpha", "rho"],
        ModelKind::Fsd => {
            if fixed_tau {
                vec!["alpha", "sigma"]
            } else {
                vec!["alpha", "tau", "sigma"]
            }
        }
        ModelKind::Fma2 => vec!["alpha", "rho1", "rho2"],
        ModelKind::Farma11 => vec!["alpha", "theta", "rho"],
        ModelKind::Fmas => vec!["alpha", "rho", "sigma"],
        ModelKind::Ls => vec![],
    }
}

fn phi_from_x(kind: ModelKind, x: &[f64], dt: f64, fixed_tau: Option<f64>) -> Phi {
    let alpha = 2.0 * sigmoid(x[0]);
    match kind {
        ModelKind::Fbm => Phi::Fbm { alpha },
        ModelKind::Fma => Phi::Fma {
            alpha,
            rho: -1.0 + 1.5 * sigmoid(x[1]),
        },
        ModelKind::Fsd => match fixed_tau {
            Some(tau) => Phi::Fsd {
                alpha,
                tau,
                sigma: x[1].exp(),
            },
            None => Phi::Fsd {
                alpha,
                tau: dt * sigmoid(x[1]),
                sigma: x[2].exp(),
            },
        },
        ModelKind::Fma2 => Phi::Fma2 {
            alpha,
            rho1: x[1],
            rho2: x[2],
        },
        ModelKind::Farma11 => Phi::Farma11 {
            alpha,
            theta: 2.0 * sigmoid(x[1]) - 1.0,
            rho: x[2],
        },
        ModelKind::Fmas => Phi::Fmas {
            alpha,
            rho: -1.0 + 1.5 * sigmoid(x[1]),
            sigma: x[2].exp(),
        },
        ModelKind::Ls => unreachable!("ls has no likelihood parameters"),
    }
}

fn x_start(kind: ModelKind, alpha0: f64, fixed_tau: Option<f64>) -> Vec<f64> {
    let a = logit(alpha0 / 2.0);
    let rho_u = logit((0.05 + 1.0) / 1.5);
    match kind {
        ModelKind::Fbm => vec![a],
        ModelKind::Fma => vec![a, rho_u],
        ModelKind::Fsd => match fixed_tau {
            Some(_) => vec![a, (0.3f64).ln()],
            None => vec![a, logit(0.3), (0.3f64).ln()],
        },
        ModelKind::Fma2 => vec![a, 0.05, 0.0],
        ModelKind::Farma11 => vec![a, logit((0.1 + 1.0) / 2.0), 0.05],
        ModelKind::Fmas => vec![a, rho_u, (0.3f64).ln()],
        ModelKind::Ls => unreachable!("ls has no likelihood parameters"),
    }
}

/// Quick LS pass over the drift-subtracted empirical MSD for a starting α.
fn alpha_start(positions: &Array2<f64>, dt: f64) -> f64 {
    let n = positions.nrows() - 1;
    let max_lag = default_ls_max_lag(n).min(n);
    let guess = empirical_msd(&drift_subtract(positions), max_lag)
        .and_then(|msd| ls_fit(&msd, dt))
        .map(|f| f.alpha)
        .unwrap_or(0.8);
    guess.clamp(0.2, 1.8)
}

struct Objective<'a> {
    kind: ModelKind,
    drift: DriftSpec,
    fixed_tau: Option<f64>,
    dt: f64,
    increments: &'a Array2<f64>,
}

impl Objective<'_> {
    fn model_at(&self, phi: &Phi) -> Result<MatNormModel> {
        let n = self.increments.nrows();
        let acf = phi.increment_acf(n, self.dt)?;
        let drift = phi.drift_matrix(self.drift, n, self.dt);
        MatNormModel::new(self.increments.clone(), acf, drift)
    }

    /// Negative profile log-likelihood; infeasible points map to the penalty.
    fn eval(&self, x: &[f64]) -> f64 {
        let phi = phi_from_x(self.kind, x, self.dt, self.fixed_tau);
        match self.model_at(&phi).and_then(|m| profile_mle(&m)) {
            Ok(fit) if fit.loglik.is_finite() => -fit.loglik,
            _ => PENALTY,
        }
    }

    /// Full log-likelihood at packed (φ, β, Σ) coordinates.
    fn full_loglik(&self, theta: &[f64], d: usize, k: usize) -> Result<f64> {
        let pd = phi_dim(self.kind, self.fixed_tau.is_some());
        let phi = phi_from_x(self.kind, &theta[..pd], self.dt, self.fixed_tau);
        let model = self.model_at(&phi)?;
        let beta = (d > 0).then(|| {
            Array2::from_shape_fn((d, k), |(i, j)| theta[pd + i * k + j])
        });
        let sigma = sigma_from_logchol(&theta[pd + d * k..], k);
        matnorm_loglik(&model, beta.as_ref(), &sigma)
    }
}

fn sigma_to_logchol(sigma: &Array2<f64>) -> Result<Vec<f64>> {
    let k = sigma.nrows();
    let na = nalgebra::DMatrix::from_fn(k, k, |i, j| sigma[[i, j]]);
    let chol = nalgebra::Cholesky::new(na)
        .ok_or_else(|| Error::Singular("sigma is not positive definite".into()))?;
    let l = chol.l();
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in 0..=i {
            if i == j {
                out.push(l[(i, i)].ln());
            } else {
                out.push(l[(i, j)]);
            }
        }
    }
    Ok(out)
}

fn sigma_from_logchol(params: &[f64], k: usize) -> Array2<f64> {
    let mut l = Array2::<f64>::zeros((k, k));
    let mut idx = 0;
    for i in 0..k {
        for j in 0..=i {
            l[[i, j]] = if i == j { params[idx].exp() } else { params[idx] };
            idx += 1;
        }
    }
    l.dot(&l.t())
}

/// Gradient of log(tr Σ) with respect to the log-Cholesky coordinates.
fn logtrace_grad(params: &[f64], k: usize) -> Vec<f64> {
    let mut l = Array2::<f64>::zeros((k, k));
    let mut idx = 0;
    for i in 0..k {
        for j in 0..=i {
            l[[i, j]] = if i == j { params[idx].exp() } else { params[idx] };
            idx += 1;
        }
    }
    let trace: f64 = l.iter().map(|v| v * v).sum();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..k {
        for j in 0..=i {
            let g = if i == j {
                2.0 * l[[i, i]] * l[[i, i]]
            } else {
                2.0 * l[[i, j]]
            };
            grad.push(g / trace);
        }
    }
    grad
}

/// Central-difference Hessian with relative steps; `None` if any evaluation
/// fails.
fn hessian<F: FnMut(&[f64]) -> Option<f64>>(
    mut f: F,
    x: &[f64],
    rel_step: f64,
) -> Option<nalgebra::DMatrix<f64>> {
    let p = x.len();
    let h: Vec<f64> = x.iter().map(|v| rel_step * v.abs().max(1.0)).collect();
    let f0 = f(x)?;
    let mut hess = nalgebra::DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h[i];
        xm[i] -= h[i];
        let (fp, fm) = (f(&xp)?, f(&xm)?);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut xpp = x.to_vec();
            let mut xpm = x.to_vec();
            let mut xmp = x.to_vec();
            let mut xmm = x.to_vec();
            xpp[i] += h[i];
            xpp[j] += h[j];
            xpm[i] += h[i];
            xpm[j] -= h[j];
            xmp[i] -= h[i];
            xmp[j] += h[j];
            xmm[i] -= h[i];
            xmm[j] -= h[j];
            let v = (f(&xpp)? - f(&xpm)? - f(&xmp)? + f(&xmm)?) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Some(hess)
}

/// Maximum-likelihood fit of a location-scale model to one path.
///
/// `positions` is the (N+1)×k recorded path; increments are taken internally.
/// The likelihood needs a reasonable amount of data (N ≥ 50 increments).
pub fn fit_mle(
    spec: &ModelSpec,
    positions: &Array2<f64>,
    dt: f64,
    opts: &FitOptions,
) -> Result<FitResult> {
    spec.validate()?;
    if spec.kind == ModelKind::Ls {
        return Err(Error::invalid(
            "the ls estimator has no likelihood; use models::ls_fit",
        ));
    }
    if positions.nrows() < 51 {
        return Err(Error::invalid(format!(
            "need at least 50 increments, got {}",
            positions.nrows().saturating_sub(1)
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let increments = increments_of(positions);
    let k = increments.ncols();
    let d = spec.drift.dim();

    let objective = Objective {
        kind: spec.kind,
        drift: spec.drift,
        fixed_tau: spec.fixed_tau,
        dt,
        increments: &increments,
    };

    let x0 = x_start(spec.kind, alpha_start(positions, dt), spec.fixed_tau);
    let nm_opts = NmOptions {
        restarts: opts.restarts,
        diam_tol: opts.diam_tol,
        seed: opts.seed,
        ..NmOptions::default()
    };
    let nm = minimize(|x| objective.eval(x), &x0, &nm_opts);
    if nm.f >= PENALTY * 0.5 || !nm.converged {
        return Err(Error::NonConvergence {
            restarts: nm_opts.restarts,
            trace: nm.restart_trace,
        });
    }

    let phi = phi_from_x(spec.kind, &nm.x, dt, spec.fixed_tau);
    let model = objective.model_at(&phi)?;
    let prof = profile_mle(&model)?;
    let sigma = prof.sigma.clone();
    let trace_sigma: f64 = (0..k).map(|i| sigma[[i, i]]).sum();
    let d_coef = trace_sigma / (2.0 * k as f64);

    // Saturated transforms mean the optimizer pinned a parameter at its
    // boundary; the quadratic approximation behind the standard errors is
    // unreliable there.
    let mut boundary = nm.x.iter().any(|v| v.abs() > 20.0);

    // Observed information in (φ, β, Σ) coordinates.
    let mut theta = nm.x.clone();
    if let Some(beta) = &prof.beta {
        theta.extend(beta.iter().copied());
    }
    theta.extend(sigma_to_logchol(&sigma)?);
    let p_total = theta.len();

    let hess = hessian(
        |t| objective.full_loglik(t, d, k).ok().filter(|v| v.is_finite()),
        &theta,
        opts.hessian_step,
    );

    let vcov = match hess {
        Some(h) => {
            let neg = -h;
            match nalgebra::Cholesky::new(neg.clone()) {
                Some(chol) => Some(chol.inverse()),
                None => {
                    // Flat or indefinite directions: flag and floor the
                    // spectrum so the remaining directions stay usable.
                    boundary = true;
                    let eig = nalgebra::SymmetricEigen::new(neg);
                    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                    if max_ev == 0.0 {
                        None
                    } else {
                        let floor = 1e-10 * max_ev;
                        let mut inv = nalgebra::DMatrix::<f64>::zeros(p_total, p_total);
                        for (idx, ev) in eig.eigenvalues.iter().enumerate() {
                            let v = eig.eigenvectors.column(idx);
                            inv += v * v.transpose() / ev.max(floor);
                        }
                        Some(inv)
                    }
                }
            }
        }
        None => {
            boundary = true;
            None
        }
    };

    // Delta method for (α, log D).
    let (se_alpha, se_log_d, vcov_vec) = match &vcov {
        Some(v) => {
            let mut ga = vec![0.0; p_total];
            let a = nm.x[0];
            ga[0] = 2.0 * sigmoid(a) * (1.0 - sigmoid(a));
            let mut gd = vec![0.0; p_total];
            let sig_params = &theta[theta.len() - k * (k + 1) / 2..];
            let gtr = logtrace_grad(sig_params, k);
            let off = p_total - gtr.len();
            gd[off..].copy_from_slice(&gtr);
            let quad = |g: &[f64]| {
                let gv = nalgebra::DVector::from_column_slice(g);
                (gv.transpose() * v * &gv)[(0, 0)]
            };
            let sa = quad(&ga).max(0.0).sqrt();
            let sd = quad(&gd).max(0.0).sqrt();
            let vv = (0..p_total)
                .map(|i| (0..p_total).map(|j| v[(i, j)]).collect())
                .collect();
            (sa, sd, vv)
        }
        None => (f64::NAN, f64::NAN, Vec::new()),
    };

    let alpha = phi.alpha();
    let log_d = d_coef.ln();
    let names: Vec<String> = phi_names(spec.kind, spec.fixed_tau.is_some())
        .iter()
        .map(|s| format!("phi.{s}"))
        .chain((0..d).flat_map(|i| (0..k).map(move |j| format!("beta[{i}][{j}]"))))
        .chain(
            (0..k)
                .flat_map(|i| (0..=i).map(move |j| (i, j)))
                .map(|(i, j)| format!("sigma.chol[{i}][{j}]")),
        )
        .collect();

    Ok(FitResult {
        model: spec.kind.name().to_string(),
        params: phi.named().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        alpha,
        d_coef,
        se_alpha,
        se_log_d,
        ci_alpha: (alpha - 1.96 * se_alpha, alpha + 1.96 * se_alpha),
        ci_log_d: (log_d - 1.96 * se_log_d, log_d + 1.96 * se_log_d),
        loglik: prof.loglik,
        beta: prof.beta.as_ref().map(|b| {
            b.axis_iter(Axis(0))
                .map(|row| row.to_vec())
                .collect()
        }),
        sigma: (0..k)
            .map(|i| (0..k).map(|j| sigma[[i, j]]).collect())
            .collect(),
        vcov: vcov_vec,
        vcov_names: names,
        converged: nm.converged,
        boundary,
        n_evals: nm.evals,
    })
}

/// Row-difference matrix of a position path: ΔY (N×k).
pub fn increments_of(positions: &Array2<f64>) -> Array2<f64> {
    let (rows, k) = positions.dim();
    Array2::from_shape_fn((rows - 1, k), |(i, c)| {
        positions[[i + 1, c]] - positions[[i, c]]
    })
}
