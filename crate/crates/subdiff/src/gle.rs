//! Generalized Langevin equation with a Rouse memory kernel.
//!
//! The massless GLE  ∫₀^∞ φ(u) V(t−u) du = F(t)  with fluctuation-dissipation
//! acf_F(t) = kT·φ(|t|) and the K-mode kernel
//! φ(t) = (ν/K) Σₖ exp(−|t|/τₖ), τₖ = τ·(K/k)^γ, produces transient
//! subdiffusion: the MSD is linear at both extremes and approximately a power
//! law 2·D_eff·t^α_eff in between. This module evaluates the exact MSD and
//! extracts the subdiffusive window.
//!
//! Writing αₖ = 1/τₖ and P(z) = Πₖ(z+αₖ), the Laplace transform of the MSD is
//! 2kT/(z²φ̂(z)) = (2kT/(ν/K))·P(z)/(z²P′(z)), whose partial fractions give
//!
//!   MSD(t) = (2kT/(ν/K))·( C₀²·t + Σⱼ (Cⱼ²/rⱼ)(1 − e^{−rⱼt}) ),
//!
//! with rⱼ the K−1 roots of Σₖ 1/(y−αₖ) = 0 (one in each interval
//! (αⱼ, αⱼ₊₁)), C₀² = 1/Σₖ(1/αₖ) and Cⱼ² = 1/(rⱼ·Σₖ(rⱼ−αₖ)⁻²). The closed
//! form is validated against an independent spectral quadrature in the tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rouse-kernel GLE parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GleSpec {
    /// Number of relaxation modes K.
    pub modes: usize,
    /// Mode-spacing exponent γ in τₖ = τ(K/k)^γ.
    pub rouse_gamma: f64,
    /// Base timescale τ in seconds.
    pub rouse_tau: f64,
    /// Kernel amplitude ν.
    pub nu: f64,
    /// Thermal scale kT (dimensionless).
    pub kt: f64,
}

impl GleSpec {
    pub fn new(modes: usize, rouse_gamma: f64, rouse_tau: f64, nu: f64) -> Result<Self> {
        let spec = GleSpec {
            modes,
            rouse_gamma,
            rouse_tau,
            nu,
            kt: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes < 1 {
            return Err(Error::invalid("GLE needs at least one mode"));
        }
        if !(self.rouse_tau > 0.0) || !(self.nu > 0.0) || !(self.rouse_gamma > 0.0) {
            return Err(Error::invalid(format!(
                "GLE parameters must be positive: gamma={}, tau={}, nu={}",
                self.rouse_gamma, self.rouse_tau, self.nu
            )));
        }
        if !(self.kt > 0.0) {
            return Err(Error::invalid("kT must be positive"));
        }
        Ok(())
    }

    /// Mode relaxation rates αₖ = 1/τₖ, ascending.
    fn rates(&self) -> Vec<f64> {
        let k_total = self.modes as f64;
        (1..=self.modes)
            .map(|k| (k as f64 / k_total).powf(self.rouse_gamma) / self.rouse_tau)
            .collect()
    }
}

/// Extracted power-law window and its effective parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdiffusionWindow {
    pub t_min: f64,
    pub t_max: f64,
    pub alpha_eff: f64,
    pub d_eff: f64,
    pub kappa: f64,
}

/// Resolved spectral representation of the GLE MSD.
#[derive(Debug, Clone)]
pub struct GleMsd {
    amplitude: f64,
    c0_sq: f64,
    /// (rate rⱼ, weight Cⱼ²/rⱼ) pairs.
    terms: Vec<(f64, f64)>,
}

impl GleMsd {
    pub fn new(spec: &GleSpec) -> Result<Self> {
        spec.validate()?;
        let rates = spec.rates();
        let k = rates.len();
        let amplitude = 2.0 * spec.kt * k as f64 / spec.nu;
        let c0_sq = 1.0 / rates.iter().map(|a| 1.0 / a).sum::<f64>();

        let mut terms = Vec::with_capacity(k - 1);
        for j in 0..k.saturating_sub(1) {
            let r = mode_balance_root(&rates, j)?;
            let s2: f64 = rates.iter().map(|a| (r - a).powi(-2)).sum();
            let cj_sq = 1.0 / (r * s2);
            terms.push((r, cj_sq / r));
        }
        Ok(GleMsd {
            amplitude,
            c0_sq,
            terms,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut acc = self.c0_sq * t;
        for &(r, w) in &self.terms {
            acc += w * (-(-r * t).exp_m1());
        }
        self.amplitude * acc
    }

    /// Long-time diffusivity slope: MSD(t)/t → amplitude·C₀².
    pub fn long_time_slope(&self) -> f64 {
        self.amplitude * self.c0_sq
    }
}

/// Root of S₁(y) = Σₖ 1/(y−αₖ) in (rates[j], rates[j+1]). S₁ decreases from
/// +∞ to −∞ across the interval, so bisection cannot fail on well-separated
/// rates; coincident rates are reported as a root-finding failure.
fn mode_balance_root(rates: &[f64], j: usize) -> Result<f64> {
    let (lo_rate, hi_rate) = (rates[j], rates[j + 1]);
    let gap = hi_rate - lo_rate;
    if !(gap > 0.0) {
        return Err(Error::RootFinding(format!(
            "mode rates {j} and {} are not strictly increasing ({lo_rate}, {hi_rate})",
            j + 1
        )));
    }
    let s1 = |y: f64| rates.iter().map(|a| 1.0 / (y - a)).sum::<f64>();
    let mut lo = lo_rate + 1e-12 * gap;
    let mut hi = hi_rate - 1e-12 * gap;
    if !(s1(lo) > 0.0 && s1(hi) < 0.0) {
        return Err(Error::RootFinding(format!(
            "roots do not interlace in ({lo_rate}, {hi_rate}): S1({lo}) = {}, S1({hi}) = {}",
            s1(lo),
            s1(hi)
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if s1(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// MSD of the Rouse-kernel GLE on a positive, increasing time grid.
pub fn gle_msd(spec: &GleSpec, t_grid: &[f64]) -> Result<Vec<f64>> {
    if t_grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::invalid("time grid must be nonnegative and finite"));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("time grid must be strictly increasing"));
    }
    let msd = GleMsd::new(spec)?;
    Ok(t_grid.iter().map(|&t| msd.eval(t)).collect())
}

/// Log-spaced grid spanning both bends of the MSD: 512 points from τ/100 to
/// 100·K^γ·τ (well below the fastest mode and well above the slowest).
pub fn default_window_grid(spec: &GleSpec) -> Vec<f64> {
    let lo = spec.rouse_tau / 100.0;
    let hi = 100.0 * (spec.modes as f64).powf(spec.rouse_gamma) * spec.rouse_tau;
    log_spaced(lo, hi, 512)
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Widest log-time window over which the sampled MSD is a power law to
/// relative tolerance `kappa`.
///
/// Exhaustive O(N²) search over grid-point pairs, widest span first: for each
/// candidate window the power law is fit by least squares on (log t, log MSD)
/// and accepted if max |fit residual / log MSD| < kappa.
pub fn extract_window(t_grid: &[f64], msd: &[f64], kappa: f64) -> Result<SubdiffusionWindow> {
    if t_grid.len() != msd.len() || t_grid.len() < 3 {
        return Err(Error::invalid(
            "window extraction needs equal-length grids with at least 3 points",
        ));
    }
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa must be positive"));
    }
    if msd.iter().any(|&v| !(v > 0.0)) || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::invalid("window extraction needs positive MSD and t"));
    }
    let x: Vec<f64> = t_grid.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = msd.iter().map(|v| v.ln()).collect();
    let n = x.len();

    // Prefix sums make each candidate fit O(1); the residual scan stays O(n).
    let mut sx = vec![0.0; n + 1];
    let mut sy = vec![0.0; n + 1];
    let mut sxx = vec![0.0; n + 1];
    let mut sxy = vec![0.0; n + 1];
    for i in 0..n {
        sx[i + 1] = sx[i] + x[i];
        sy[i + 1] = sy[i] + y[i];
        sxx[i + 1] = sxx[i] + x[i] * x[i];
        sxy[i + 1] = sxy[i] + x[i] * y[i];
    }

    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 2)..n {
            candidates.push((x[j] - x[i], i, j));
        }
    }
    candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    for &(_, i, j) in &candidates {
        let m = (j - i + 1) as f64;
        let mx = (sx[j + 1] - sx[i]) / m;
        let my = (sy[j + 1] - sy[i]) / m;
        let cxx = (sxx[j + 1] - sxx[i]) - m * mx * mx;
        let cxy = (sxy[j + 1] - sxy[i]) - m * mx * my;
        if cxx <= 0.0 {
            continue;
        }
        let alpha = cxy / cxx;
        let intercept = my - alpha * mx;
        // Guard the denominator where log MSD crosses zero so that exact
        // power laws (residual 0) stay feasible there.
        let feasible = (i..=j).all(|t| {
            let res = alpha * x[t] + intercept - y[t];
            (res / y[t].abs().max(1e-8)).abs() < kappa
        });
        if feasible {
            let alpha_eff = alpha;
            let d_eff = 0.5 * (my - alpha * mx).exp();
            if !(alpha_eff > 0.0 && alpha_eff < 2.0) {
                return Err(Error::invalid(format!(
                    "extracted window has alpha_eff = {alpha_eff} outside (0, 2)"
                )));
            }
            return Ok(SubdiffusionWindow {
                t_min: t_grid[i],
                t_max: t_grid[j],
                alpha_eff,
                d_eff,
                kappa,
            });
        }
    }
    Err(Error::NoFeasibleWindow { kappa })
}
