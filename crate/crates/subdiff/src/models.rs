//! Estimator zoo: declarative model specifications, the semiparametric
//! least-squares estimator, and diffusivity reporting conventions.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::csi::CsiKernel;
use crate::error::{Error, Result};
use crate::noise::{filtered_drift, observed_increment_acf, ArmaFilter, NoiseModel, SavinDoyleNoise};
use crate::toeplitz::AcfSeq;
use crate::tracks::MsdCurve;

/// The estimators of the simulation studies: semiparametric least squares
/// plus the fBM-driven location-scale family under different noise filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ls,
    Fbm,
    Fsd,
    Fma,
    Fma2,
    Farma11,
    Fmas,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Ls => "ls",
            ModelKind::Fbm => "fbm",
            ModelKind::Fsd => "fsd",
            ModelKind::Fma => "fma",
            ModelKind::Fma2 => "fma2",
            ModelKind::Farma11 => "farma11",
            ModelKind::Fmas => "fmas",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ls" => Ok(ModelKind::Ls),
            "fbm" => Ok(ModelKind::Fbm),
            "fsd" => Ok(ModelKind::Fsd),
            "fma" => Ok(ModelKind::Fma),
            "fma2" => Ok(ModelKind::Fma2),
            "farma11" | "farma" => Ok(ModelKind::Farma11),
            "fmas" => Ok(ModelKind::Fmas),
            other => Err(Error::invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Low-frequency drift regressors f_j(t) of the location-scale model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DriftSpec {
    None,
    #[default]
    Linear,
    Quadratic,
}

impl DriftSpec {
    pub fn dim(&self) -> usize {
        match self {
            DriftSpec::None => 0,
            DriftSpec::Linear => 1,
            DriftSpec::Quadratic => 2,
        }
    }
}

/// Declarative description of an estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub drift: DriftSpec,
    /// Fixes the Savin-Doyle exposure time instead of estimating it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_tau: Option<f64>,
    /// Fraction of MSD lags kept by the LS estimator.
    #[serde(default = "default_truncation")]
    pub ls_truncation: f64,
}

fn default_truncation() -> f64 {
    0.3
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            drift: DriftSpec::Linear,
            fixed_tau: None,
            ls_truncation: 0.3,
        }
    }

    pub fn with_drift(mut self, drift: DriftSpec) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_fixed_tau(mut self, tau: f64) -> Self {
        self.fixed_tau = Some(tau);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.fixed_tau.is_some() && self.kind != ModelKind::Fsd {
            return Err(Error::invalid(format!(
                "fixed_tau only applies to the fsd model, not {}",
                self.kind.name()
            )));
        }
        if let Some(tau) = self.fixed_tau {
            if !(tau >= 0.0) || !tau.is_finite() {
                return Err(Error::invalid("fixed_tau must be finite and >= 0"));
            }
        }
        if !(self.ls_truncation > 0.0 && self.ls_truncation <= 1.0) {
            return Err(Error::invalid("ls_truncation must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Kernel/noise parameters of a fitted location-scale model, on the natural
/// scale.
#[derive(Debug, Clone, PartialEq)]
pub enum Phi {
    Fbm { alpha: f64 },
    Fsd { alpha: f64, tau: f64, sigma: f64 },
    Fma { alpha: f64, rho: f64 },
    Fma2 { alpha: f64, rho1: f64, rho2: f64 },
    Farma11 { alpha: f64, theta: f64, rho: f64 },
    Fmas { alpha: f64, rho: f64, sigma: f64 },
}

impl Phi {
    pub fn alpha(&self) -> f64 {
        match *self {
            Phi::Fbm { alpha }
            | Phi::Fsd { alpha, .. }
            | Phi::Fma { alpha, .. }
            | Phi::Fma2 { alpha, .. }
            | Phi::Farma11 { alpha, .. }
            | Phi::Fmas { alpha, .. } => alpha,
        }
    }

    pub fn named(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Phi::Fbm { alpha } => vec![("alpha", alpha)],
            Phi::Fsd { alpha, tau, sigma } => {
                vec![("alpha", alpha), ("tau", tau), ("sigma", sigma)]
            }
            Phi::Fma { alpha, rho } => vec![("alpha", alpha), ("rho", rho)],
            Phi::Fma2 { alpha, rho1, rho2 } => {
                vec![("alpha", alpha), ("rho1", rho1), ("rho2", rho2)]
            }
            Phi::Farma11 { alpha, theta, rho } => {
                vec![("alpha", alpha), ("theta", theta), ("rho", rho)]
            }
            Phi::Fmas { alpha, rho, sigma } => {
                vec![("alpha", alpha), ("rho", rho), ("sigma", sigma)]
            }
        }
    }

    /// Noise model implied by the non-kernel parameters.
    pub fn noise_model(&self) -> Result<NoiseModel> {
        Ok(match *self {
            Phi::Fbm { .. } => NoiseModel::None,
            Phi::Fsd { tau, sigma, .. } => {
                NoiseModel::SavinDoyle(SavinDoyleNoise::new(tau, sigma)?)
            }
            Phi::Fma { rho, .. } => NoiseModel::Arma(ArmaFilter::ma1(rho)?),
            Phi::Fma2 { rho1, rho2, .. } => {
                NoiseModel::Arma(ArmaFilter::new(vec![], vec![rho1, rho2])?)
            }
            Phi::Farma11 { theta, rho, .. } => {
                NoiseModel::Arma(ArmaFilter::new(vec![theta], vec![rho])?)
            }
            Phi::Fmas { rho, sigma, .. } => NoiseModel::ArmaStatic {
                filter: ArmaFilter::ma1(rho)?,
                static_scale: sigma,
            },
        })
    }

    /// Observed increment ACF of the model at N lags.
    pub fn increment_acf(&self, n_lags: usize, dt: f64) -> Result<AcfSeq> {
        let kernel = CsiKernel::fbm(self.alpha())?;
        observed_increment_acf(&kernel, &self.noise_model()?, dt, n_lags)
    }

    /// Drift increment matrix F_φ (N×d) for the given regressors, seen
    /// through the model's filter. Savin-Doyle exposure averaging replaces
    /// f_j(t_n) by its mean over the exposure window.
    pub fn drift_matrix(&self, drift: DriftSpec, n: usize, dt: f64) -> Option<Array2<f64>> {
        let d = drift.dim();
        if d == 0 {
            return None;
        }
        let tau = match *self {
            Phi::Fsd { tau, .. } => tau,
            _ => 0.0,
        };
        let mut df = Array2::<f64>::zeros((n, d));
        for row in 0..n {
            let t0 = row as f64 * dt;
            let t1 = t0 + dt;
            df[[row, 0]] = t1 - t0;
            if d > 1 {
                // Exposure-averaged quadratic regressor: mean of (t−s)² over
                // s in [0, τ] is t² − τt + τ²/3, so increments shift by −τΔt.
                df[[row, 1]] = (t1 * t1 - t0 * t0) - tau * dt;
            }
        }
        match self.noise_model() {
            Ok(NoiseModel::Arma(filter)) => Some(filtered_drift(&filter, &df)),
            Ok(NoiseModel::ArmaStatic { filter, .. }) => Some(filtered_drift(&filter, &df)),
            _ => Some(df),
        }
    }
}

/// Least-squares subdiffusion estimate from a log-log regression of the MSD
/// curve: α̂ is the OLS slope and D̂ = ½·exp(ȳ − α̂·x̄).
///
/// The caller supplies the (already truncated) curve; see
/// [`MsdCurve::truncated_fraction`] and the 30% default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsFit {
    pub alpha: f64,
    pub d_coef: f64,
}

pub fn ls_fit(msd: &MsdCurve, dt: f64) -> Result<LsFit> {
    if msd.len() < 3 {
        return Err(Error::invalid("LS fit needs at least 3 lags"));
    }
    if msd.values().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("LS fit needs strictly positive MSD values"));
    }
    let x: Vec<f64> = msd.lags().iter().map(|&n| (n as f64 * dt).ln()).collect();
    let y: Vec<f64> = msd.values().iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let xb = x.iter().sum::<f64>() / n;
    let yb = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - xb) * (v - xb)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - xb) * (b - yb)).sum();
    let alpha = sxy / sxx;
    let d_coef = 0.5 * (yb - alpha * xb).exp();
    Ok(LsFit { alpha, d_coef })
}

/// Diffusivity reporting convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DConvention {
    /// D = tr(Σ̂)/(2k), in µm²·s^−α.
    PerAlphaUnits,
    /// Half the model MSD at t = 1 s: D = tr(Σ̂)/(2k)·η(1). Identical to the
    /// other convention for the fBM family, where η(1) = 1.
    MsdAtOneSecond { eta_at_one: f64 },
}

/// Maps a fitted scale matrix to the reported diffusivity.
pub fn report_d(sigma_hat: &Array2<f64>, convention: DConvention) -> Result<f64> {
    let k = sigma_hat.nrows();
    if sigma_hat.ncols() != k || k == 0 {
        return Err(Error::invalid("sigma must be square and nonempty"));
    }
    let trace: f64 = (0..k).map(|i| sigma_hat[[i, i]]).sum();
    let base = trace / (2.0 * k as f64);
    Ok(match convention {
        DConvention::PerAlphaUnits => base,
        DConvention::MsdAtOneSecond { eta_at_one } => base * eta_at_one,
    })
}
