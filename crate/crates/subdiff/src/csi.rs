//! Continuous stationary-increments (CSI) process kernels.
//!
//! A mean-zero CSI Gaussian process is determined by its MSD η(t); sampled on
//! the lag grid {0, Δt, …, NΔt} this fixes the increment autocovariance
//! γ(n) = ½(η(|n−1|Δt) + η((n+1)Δt) − 2η(nΔt)) and conversely
//! MSD(n) = n·γ(0) + 2·Σ_{h=1}^{n−1}(n−h)·γ(h).

use crate::error::{Error, Result};
use crate::gle::{self, GleSpec};
use crate::toeplitz::AcfSeq;

/// MSD kernel η(t | φ) of a driving CSI process.
#[derive(Debug, Clone, PartialEq)]
pub enum CsiKernel {
    /// Fractional Brownian motion, η(t) = t^α with 0 < α < 2. The unique CSI
    /// Gaussian process with a uniform power-law MSD.
    Fbm { alpha: f64 },
    /// Rouse-kernel generalized Langevin equation (transient subdiffusion).
    Gle(GleSpec),
    /// Tabulated MSD on the lag grid: `msd[j] = η(j·Δt)`, `msd[0] = 0`.
    Empirical { msd: Vec<f64> },
}

impl CsiKernel {
    pub fn fbm(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(CsiKernel::Fbm { alpha })
    }

    pub fn empirical(msd: Vec<f64>) -> Result<Self> {
        if msd.len() < 2 {
            return Err(Error::invalid("empirical MSD table needs at least 2 rows"));
        }
        if msd[0] != 0.0 {
            return Err(Error::invalid("empirical MSD must start at eta(0) = 0"));
        }
        if msd.windows(2).any(|w| w[1] < w[0]) || msd.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("empirical MSD must be finite and nondecreasing"));
        }
        Ok(CsiKernel::Empirical { msd })
    }

    /// η evaluated on the lag grid {0, Δt, …, nΔt}; length n+1. The kernel is
    /// always evaluated on this grid; no interpolation happens downstream.
    pub fn msd_grid(&self, n: usize, dt: f64) -> Result<Vec<f64>> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        match self {
            CsiKernel::Fbm { alpha } => (0..=n)
                .map(|j| fbm_msd(*alpha, j as f64 * dt))
                .collect(),
            CsiKernel::Gle(spec) => {
                let grid: Vec<f64> = (1..=n).map(|j| j as f64 * dt).collect();
                let mut out = Vec::with_capacity(n + 1);
                out.push(0.0);
                out.extend(gle::gle_msd(spec, &grid)?);
                Ok(out)
            }
            CsiKernel::Empirical { msd } => {
                if msd.len() < n + 1 {
                    return Err(Error::invalid(format!(
                        "empirical MSD table has {} rows, need {}",
                        msd.len(),
                        n + 1
                    )));
                }
                Ok(msd[..=n].to_vec())
            }
        }
    }

    /// Increment autocovariance γ(0..n_lags−1) on the Δt grid.
    pub fn increment_acf(&self, n_lags: usize, dt: f64) -> Result<AcfSeq> {
        msd_to_acf(&self.msd_grid(n_lags, dt)?, dt)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::invalid(format!(
            "fBM exponent must lie in (0, 2), got {alpha}"
        )));
    }
    Ok(())
}

/// fBM MSD: η(t) = t^α.
pub fn fbm_msd(alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("time must be nonnegative, got {t}")));
    }
    Ok(t.powf(alpha))
}

/// fBM covariance: ½(|t|^α + |s|^α − |t−s|^α).
pub fn fbm_cov(alpha: f64, s: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !s.is_finite() || !t.is_finite() {
        return Err(Error::invalid("covariance arguments must be finite"));
    }
    Ok(0.5 * (t.abs().powf(alpha) + s.abs().powf(alpha) - (t - s).abs().powf(alpha)))
}

/// Increment autocovariance from an MSD sampled at lags 0..=N (so the output
/// has N lags): γ(n) = ½(η(|n−1|Δt) + η((n+1)Δt) − 2η(nΔt)).
pub fn msd_to_acf(msd: &[f64], dt: f64) -> Result<AcfSeq> {
    if msd.len() < 2 {
        return Err(Error::invalid("MSD too short: need at least lags 0 and 1"));
    }
    if msd[0] != 0.0 {
        return Err(Error::invalid("MSD must vanish at lag 0"));
    }
    let n = msd.len() - 1;
    let mut g = Vec::with_capacity(n);
    for lag in 0..n {
        let prev = msd[lag.abs_diff(1)];
        g.push(0.5 * (prev + msd[lag + 1] - 2.0 * msd[lag]));
    }
    AcfSeq::new(g, dt)
}

/// MSD at lags 1..=N from an increment autocovariance of length N:
/// MSD(n) = n·γ(0) + 2·Σ_{h=1}^{n−1}(n−h)·γ(h), evaluated by the equivalent
/// O(N) recursion MSD(n) = MSD(n−1) + γ(0) + 2·Σ_{h<n}γ(h).
pub fn acf_to_msd(acf: &AcfSeq) -> Vec<f64> {
    let g = acf.values();
    let n = g.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0; // Σ_{h=1}^{n-1} γ(h)
    let mut msd = 0.0;
    for lag in 1..=n {
        if lag >= 2 {
            cum += g[lag - 1];
        }
        msd += g[0] + 2.0 * cum;
        out.push(msd);
    }
    out
}
