//! High-frequency noise filters for recorded particle positions.
//!
//! Two families are provided. The Savin-Doyle localization error model
//! combines motion blur over the camera exposure window τ with additive
//! white static noise. The ARMA(p,q) position filters
//!
//!   Yₙ = Σᵢ θᵢ Yₙ₋ᵢ + Σⱼ ρⱼ Xₙ₋ⱼ
//!
//! describe the recorded positions as an autoregressive/moving-average
//! transform of the true ones; fixing ρ₀ = 1 − Σθᵢ − Σρⱼ makes the filter a
//! pure high-frequency distortion, i.e. MSD_Y(n)/MSD_X(n) → 1, so the
//! long-lag subdiffusion signal survives untouched.

use ndarray::Array2;

use crate::csi::{acf_to_msd, CsiKernel};
use crate::error::{Error, Result};
use crate::toeplitz::{toeplitz_matvec, AcfSeq};

/// Default order for approximating an AR(p) filter by an MA(q*) expansion.
pub const DEFAULT_AR_TRUNCATION: usize = 50;

/// An ARMA(p,q) high-frequency filter. ρ₀ is always derived from the other
/// coefficients; no constructor stores an inconsistent value.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaFilter {
    theta: Vec<f64>,
    rho: Vec<f64>,
    rho0: f64,
}

impl ArmaFilter {
    /// Builds the filter with ρ₀ = 1 − Σθᵢ − Σρⱼ, then verifies
    /// stationarity and invertibility: the characteristic polynomials
    /// 1 − Σθᵢzⁱ and ρ₀ − Σρⱼzʲ must have all roots strictly outside the
    /// closed unit disk (checked with margin 1e-9). The MA(1) special case
    /// must additionally satisfy ρ ∈ (−1, ½).
    pub fn new(theta: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if theta.iter().chain(&rho).any(|c| !c.is_finite()) {
            return Err(Error::invalid("filter coefficients must be finite"));
        }
        let rho0 = 1.0 - theta.iter().sum::<f64>() - rho.iter().sum::<f64>();

        let mut ar_poly = vec![1.0];
        ar_poly.extend(theta.iter().map(|t| -t));
        check_roots_outside_unit_disk(&ar_poly, "autoregressive")?;

        let mut ma_poly = vec![rho0];
        ma_poly.extend(rho.iter().map(|r| -r));
        check_roots_outside_unit_disk(&ma_poly, "moving-average")?;

        if theta.is_empty() && rho.len() == 1 {
            let r = rho[0];
            if !(r > -1.0 && r < 0.5) {
                return Err(Error::invalid(format!(
                    "MA(1) coefficient must lie in (-1, 1/2), got {r}"
                )));
            }
        }

        Ok(ArmaFilter { theta, rho, rho0 })
    }

    /// The identity filter (p = 0, q = 0, ρ₀ = 1).
    pub fn identity() -> Self {
        ArmaFilter {
            theta: Vec::new(),
            rho: Vec::new(),
            rho0: 1.0,
        }
    }

    /// First-order moving-average filter Yₙ = (1−ρ)Xₙ + ρXₙ₋₁.
    pub fn ma1(rho: f64) -> Result<Self> {
        ArmaFilter::new(Vec::new(), vec![rho])
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn ar_order(&self) -> usize {
        self.theta.len()
    }

    pub fn ma_order(&self) -> usize {
        self.rho.len()
    }

    /// Full moving-average coefficient vector (ρ₀, ρ₁, …, ρ_q).
    pub fn ma_coeffs(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.rho.len() + 1);
        c.push(self.rho0);
        c.extend_from_slice(&self.rho);
        c
    }

    /// Base ACF lags consumed beyond the requested output length.
    pub fn extra_lags(&self, truncation: usize) -> usize {
        self.rho.len() + if self.theta.is_empty() { 0 } else { truncation }
    }
}

/// Requires all roots of c₀ + c₁z + … + c_d z^d to have modulus > 1 + 1e-9.
/// Roots come from the companion matrix of the monic normalization after
/// trimming trailing zero coefficients.
fn check_roots_outside_unit_disk(coeffs: &[f64], which: &str) -> Result<()> {
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg] == 0.0 {
        deg -= 1;
    }
    if deg == 0 {
        if coeffs[0] == 0.0 {
            return Err(Error::invalid(format!(
                "{which} polynomial is identically zero"
            )));
        }
        return Ok(());
    }
    if coeffs[0] == 0.0 {
        // z = 0 is a root, inside the disk by definition.
        return Err(Error::invalid(format!(
            "{which} polynomial has a root at the origin (leading coefficient is zero)"
        )));
    }
    let lead = coeffs[deg];
    let comp = nalgebra::DMatrix::<f64>::from_fn(deg, deg, |i, j| {
        if j == deg - 1 {
            -coeffs[i] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let tol = 1.0 + 1e-9;
    for ev in comp.complex_eigenvalues().iter() {
        if ev.norm() <= tol {
            return Err(Error::invalid(format!(
                "{which} polynomial has root of modulus {:.9} inside or on the unit disk",
                ev.norm()
            )));
        }
    }
    Ok(())
}

/// Savin-Doyle localization error parameters. `static_scale` is σ in
/// Σ_ε = σ²·Σ, i.e. relative to the trajectory scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SavinDoyleNoise {
    pub exposure_time: f64,
    pub static_scale: f64,
    pub estimate_tau: bool,
}

impl SavinDoyleNoise {
    pub fn new(exposure_time: f64, static_scale: f64) -> Result<Self> {
        if !(exposure_time >= 0.0) || !exposure_time.is_finite() {
            return Err(Error::invalid("exposure time must be finite and >= 0"));
        }
        if !(static_scale >= 0.0) || !static_scale.is_finite() {
            return Err(Error::invalid("static noise scale must be finite and >= 0"));
        }
        Ok(SavinDoyleNoise {
            exposure_time,
            static_scale,
            estimate_tau: true,
        })
    }

    pub fn validate_against(&self, dt: f64) -> Result<()> {
        if self.exposure_time >= dt {
            return Err(Error::invalid(format!(
                "exposure time {} must be below the frame interval {dt}",
                self.exposure_time
            )));
        }
        Ok(())
    }
}

/// Exposure-averaged fBM kernel
/// g_τ(t) = (|t+τ|^{α+2} + |t−τ|^{α+2} − 2|t|^{α+2}) / (2τ²(α+1)(α+2)).
///
/// The closed form is a second central difference and loses all precision
/// once τ ≪ t; past t > 50τ it is evaluated by its Taylor expansion in τ
/// instead (relative error below (τ/t)⁶).
fn g_tau(t: f64, tau: f64, alpha: f64) -> f64 {
    let t = t.abs();
    let c2 = (alpha + 1.0) * (alpha + 2.0);
    if t > 50.0 * tau {
        let f2 = c2 * t.powf(alpha);
        let f4 = c2 * alpha * (alpha - 1.0) * t.powf(alpha - 2.0);
        let f6 = c2 * alpha * (alpha - 1.0) * (alpha - 2.0) * (alpha - 3.0) * t.powf(alpha - 4.0);
        let tau2 = tau * tau;
        (f2 + tau2 * f4 / 12.0 + tau2 * tau2 * f6 / 360.0) / (2.0 * c2)
    } else {
        let p = alpha + 2.0;
        ((t + tau).powf(p) + (t - tau).abs().powf(p) - 2.0 * t.powf(p)) / (2.0 * tau * tau * c2)
    }
}

/// Increment ACF of exposure-averaged fBM (dynamic Savin-Doyle error):
/// acf(n) = g_τ((n+1)Δt) + g_τ(|n−1|Δt) − 2g_τ(nΔt). τ = 0 short-circuits to
/// the plain fBM increment ACF.
pub fn sd_dynamic_acf(alpha: f64, tau: f64, dt: f64, n_lags: usize) -> Result<AcfSeq> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::invalid(format!("alpha must be in (0, 2), got {alpha}")));
    }
    if !(tau >= 0.0 && tau < dt) {
        return Err(Error::invalid(format!(
            "exposure time must satisfy 0 <= tau < dt, got tau={tau}, dt={dt}"
        )));
    }
    if n_lags == 0 {
        return Err(Error::invalid("need at least one lag"));
    }
    if tau == 0.0 {
        return CsiKernel::fbm(alpha)?.increment_acf(n_lags, dt);
    }
    let g = |n: usize| g_tau(n as f64 * dt, tau, alpha);
    let values = (0..n_lags)
        .map(|n| g(n + 1) + g(n.abs_diff(1)) - 2.0 * g(n))
        .collect();
    AcfSeq::new(values, dt)
}

/// Increment ACF of white static localization noise: σ²·(2, −1, 0, 0, …).
pub fn sd_static_acf(sigma: f64, n_lags: usize, dt: f64) -> Result<AcfSeq> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma must be finite and >= 0"));
    }
    if n_lags == 0 {
        return Err(Error::invalid("need at least one lag"));
    }
    let s2 = sigma * sigma;
    let mut values = vec![0.0; n_lags];
    values[0] = 2.0 * s2;
    if n_lags > 1 {
        values[1] = -s2;
    }
    AcfSeq::new(values, dt)
}

/// ACF of an MA-filtered increment process with coefficients
/// c = (ρ₀, …, ρ_q): acf_Y(n) = Σᵢⱼ cᵢcⱼ·acf_X(|n+i−j|). Exact up to FFT
/// rounding; evaluated as two Toeplitz products per the 4-step FFT scheme.
pub fn ma_filtered_acf(coeffs: &[f64], base: &AcfSeq, n_lags: usize) -> Result<AcfSeq> {
    if coeffs.is_empty() {
        return Err(Error::invalid("MA coefficient vector is empty"));
    }
    if n_lags == 0 {
        return Err(Error::invalid("need at least one lag"));
    }
    let q = coeffs.len() - 1;
    if base.len() < n_lags + q {
        return Err(Error::invalid(format!(
            "base ACF has {} lags; MA({q}) filtering to {n_lags} lags needs {}",
            base.len(),
            n_lags + q
        )));
    }
    let eta = base.values();

    // u_i = Σ_j c_j η_{|i-j|}, i = 0..n_lags+q-1: symmetric rectangular Toeplitz.
    let first_row = &eta[..=q.min(eta.len() - 1)];
    let first_col = &eta[..n_lags + q];
    let u = toeplitz_matvec(first_row, first_col, coeffs)?;

    // γ_n = Σ_m c_m u_{n+m}, n = 0..n_lags-1: banded upper-triangular Toeplitz.
    let mut row2 = vec![0.0; n_lags + q];
    row2[..=q].copy_from_slice(coeffs);
    let mut col2 = vec![0.0; n_lags];
    col2[0] = coeffs[0];
    let gamma = toeplitz_matvec(&row2, &col2, &u)?;
    AcfSeq::new(gamma, base.dt())
}

/// Coefficients of the n-th power of the polynomial with coefficients `a`,
/// truncated at degree `max_deg`, via the recursion
/// b₀ = a₀ⁿ,  bₖ = (1/(k·a₀))·Σᵢ ((n+1)i − k)·aᵢ·bₖ₋ᵢ  (requires a₀ ≠ 0).
pub(crate) fn poly_power_coeffs(a: &[f64], n: usize, max_deg: usize) -> Vec<f64> {
    debug_assert!(a[0] != 0.0);
    let deg = max_deg.min(n * (a.len() - 1));
    let mut b = vec![0.0; deg + 1];
    b[0] = a[0].powi(n as i32);
    for k in 1..=deg {
        let mut acc = 0.0;
        for i in 1..=k.min(a.len() - 1) {
            acc += ((n + 1) as f64 * i as f64 - k as f64) * a[i] * b[k - i];
        }
        b[k] = acc / (k as f64 * a[0]);
    }
    b
}

/// Power-series coefficients (ρ₀, …, ρ_q*) of [1 − θ(B)]⁻¹, i.e. the MA(∞)
/// representation of the AR(p) filter truncated at `order`. Uses the
/// polynomial-power recursion on g(x) = θ(x)/x with ρᵢ = Σⱼ b⁽ʲ⁾ᵢ₋ⱼ; when
/// θ₁ = 0 that recursion divides by zero, so direct power-series division is
/// used instead.
pub fn ar_to_ma(theta: &[f64], order: usize) -> Vec<f64> {
    let mut rho = vec![0.0; order + 1];
    rho[0] = 1.0;
    if theta.is_empty() {
        return rho;
    }
    if theta[0] != 0.0 {
        for j in 1..=order {
            let b = poly_power_coeffs(theta, j, order - j);
            for (k, bk) in b.iter().enumerate() {
                rho[j + k] += bk;
            }
        }
    } else {
        for i in 1..=order {
            let mut acc = 0.0;
            for m in 1..=i.min(theta.len()) {
                acc += theta[m - 1] * rho[i - m];
            }
            rho[i] = acc;
        }
    }
    rho
}

/// ACF of the ARMA(p,q)-filtered increment process. Exact for p = 0; for
/// p > 0 the AR part is expanded to an MA(q*) filter first (two-step
/// composition), with q* = `truncation`.
pub fn arma_filtered_acf_with(
    filter: &ArmaFilter,
    base: &AcfSeq,
    n_lags: usize,
    truncation: usize,
) -> Result<AcfSeq> {
    let ma = filter.ma_coeffs();
    if filter.theta.is_empty() {
        return ma_filtered_acf(&ma, base, n_lags);
    }
    let needed = n_lags + filter.extra_lags(truncation);
    if base.len() < needed {
        return Err(Error::invalid(format!(
            "base ACF has {} lags; ARMA({},{}) filtering to {n_lags} lags with truncation {truncation} needs {needed}",
            base.len(),
            filter.ar_order(),
            filter.ma_order(),
        )));
    }
    let step1 = ma_filtered_acf(&ma, base, n_lags + truncation)?;
    let psi = ar_to_ma(&filter.theta, truncation);
    ma_filtered_acf(&psi, &step1, n_lags)
}

/// [`arma_filtered_acf_with`] at the default truncation order.
pub fn arma_filtered_acf(filter: &ArmaFilter, base: &AcfSeq, n_lags: usize) -> Result<AcfSeq> {
    arma_filtered_acf_with(filter, base, n_lags, DEFAULT_AR_TRUNCATION)
}

/// Drift increment matrix seen through the filter:
/// F_{nm} = Σᵢ θᵢ F_{n−i,m} + Σⱼ ρⱼ Δf_{n−j,m}, the expectation of the
/// filter recursion applied to a deterministic drift path (pre-sample
/// history contributes zero mean).
pub fn filtered_drift(filter: &ArmaFilter, delta_f: &Array2<f64>) -> Array2<f64> {
    let (n, d) = delta_f.dim();
    let ma = filter.ma_coeffs();
    let mut out = Array2::<f64>::zeros((n, d));
    for row in 0..n {
        for col in 0..d {
            let mut acc = 0.0;
            for (i, &th) in filter.theta.iter().enumerate() {
                if row > i {
                    acc += th * out[[row - 1 - i, col]];
                }
            }
            for (j, &rj) in ma.iter().enumerate() {
                if row >= j {
                    acc += rj * delta_f[[row - j, col]];
                }
            }
            out[[row, col]] = acc;
        }
    }
    out
}

/// Diagnostic for the high-frequency restriction:
/// MSD_Y(n_probe)/MSD_X(n_probe) for the filtered vs base process. Restricted
/// filters drive this to 1 as the probe lag grows.
pub fn hf_ratio_check(filter: &ArmaFilter, base: &AcfSeq, n_probe: usize) -> Result<f64> {
    if n_probe == 0 {
        return Err(Error::invalid("probe lag must be positive"));
    }
    let filtered = arma_filtered_acf(filter, base, n_probe)?;
    let msd_y = acf_to_msd(&filtered);
    let msd_x = acf_to_msd(&base.truncated(n_probe)?);
    Ok(msd_y[n_probe - 1] / msd_x[n_probe - 1])
}

/// Noise composition applied to a driving kernel when building observed
/// increment ACFs.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    None,
    Arma(ArmaFilter),
    SavinDoyle(SavinDoyleNoise),
    /// ARMA filtering of the signal plus unfiltered white static noise
    /// (the fMAS composition when the filter is MA(1)).
    ArmaStatic {
        filter: ArmaFilter,
        static_scale: f64,
    },
}

/// Increment ACF of the observed process: the kernel's ACF pushed through
/// the noise model. Savin-Doyle dynamic blur has a closed form only for the
/// fBM kernel.
pub fn observed_increment_acf(
    kernel: &CsiKernel,
    noise: &NoiseModel,
    dt: f64,
    n_lags: usize,
) -> Result<AcfSeq> {
    match noise {
        NoiseModel::None => kernel.increment_acf(n_lags, dt),
        NoiseModel::Arma(filter) => {
            let base = kernel.increment_acf(
                n_lags + filter.extra_lags(DEFAULT_AR_TRUNCATION),
                dt,
            )?;
            arma_filtered_acf(filter, &base, n_lags)
        }
        NoiseModel::SavinDoyle(sd) => {
            sd.validate_against(dt)?;
            let alpha = match kernel {
                CsiKernel::Fbm { alpha } => *alpha,
                _ => {
                    return Err(Error::invalid(
                        "Savin-Doyle dynamic error is only available for the fBM kernel",
                    ))
                }
            };
            let dynamic = sd_dynamic_acf(alpha, sd.exposure_time, dt, n_lags)?;
            if sd.static_scale == 0.0 {
                Ok(dynamic)
            } else {
                dynamic.add(&sd_static_acf(sd.static_scale, n_lags, dt)?)
            }
        }
        NoiseModel::ArmaStatic {
            filter,
            static_scale,
        } => {
            let base = kernel.increment_acf(
                n_lags + filter.extra_lags(DEFAULT_AR_TRUNCATION),
                dt,
            )?;
            let filtered = arma_filtered_acf(filter, &base, n_lags)?;
            if *static_scale == 0.0 {
                Ok(filtered)
            } else {
                filtered.add(&sd_static_acf(*static_scale, n_lags, dt)?)
            }
        }
    }
}
