//! Symmetric positive-definite Toeplitz linear algebra.
//!
//! The covariance of N consecutive increments of a stationary process is the
//! Toeplitz matrix `V[i][j] = γ(|i−j|)`. Everything a Gaussian likelihood
//! needs from V (solves against it, its log-determinant, exact samples)
//! is available in O(N²) time and O(N) extra space from the autocovariance
//! sequence alone via the Durbin-Levinson recursion. Positive definiteness is
//! verified for free inside the recursion: V is PD iff every innovation
//! variance stays positive.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Autocovariance sequence γ(0..N−1) of a stationary increment process, in
/// µm². `dt` records the sampling interval the lags refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfSeq {
    values: Vec<f64>,
    dt: f64,
}

impl AcfSeq {
    /// Positive definiteness of the implied Toeplitz matrix is checked
    /// lazily by the Durbin-Levinson recursion, not here.
    pub fn new(values: Vec<f64>, dt: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("autocovariance sequence is empty"));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "autocovariance contains non-finite value {bad}"
            )));
        }
        Ok(AcfSeq { values, dt })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// γ(lag), zero beyond the stored range.
    pub fn gamma(&self, lag: usize) -> f64 {
        self.values.get(lag).copied().unwrap_or(0.0)
    }

    /// First `n` lags of the sequence.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.values.len() {
            return Err(Error::invalid(format!(
                "cannot truncate length-{} ACF to {n} lags",
                self.values.len()
            )));
        }
        AcfSeq::new(self.values[..n].to_vec(), self.dt)
    }

    /// Elementwise sum; the two sequences must share dt and length.
    pub fn add(&self, other: &AcfSeq) -> Result<Self> {
        if self.len() != other.len() || self.dt != other.dt {
            return Err(Error::invalid(
                "cannot add autocovariances with different length or dt",
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        AcfSeq::new(values, self.dt)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        AcfSeq::new(self.values.iter().map(|v| c * v).collect(), self.dt)
    }

    /// Dense Toeplitz realization, for oracles and small problems.
    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.len();
        Array2::from_shape_fn((n, n), |(i, j)| self.values[i.abs_diff(j)])
    }
}

/// Output of [`dl_solve`]: `solution = V⁻¹·rhs` and `logdet = log|V|`.
#[derive(Debug, Clone)]
pub struct ToeplitzSolve {
    pub solution: Array2<f64>,
    pub logdet: f64,
}

/// Solves `V x = rhs` for every column of `rhs` and computes `log|V|`, where
/// `V = Toeplitz(acf)`, by the Durbin-Levinson recursion. O(N²·(1+m)) time
/// for m right-hand sides, O(N) workspace beyond the solution.
///
/// Fails with [`Error::NotPositiveDefinite`] naming the first order whose
/// innovation variance is non-positive.
pub fn dl_solve(acf: &AcfSeq, rhs: &Array2<f64>) -> Result<ToeplitzSolve> {
    let n = acf.len();
    let m = rhs.ncols();
    if rhs.nrows() != n {
        return Err(Error::invalid(format!(
            "rhs has {} rows, expected {n}",
            rhs.nrows()
        )));
    }
    let g = acf.values();
    let v0 = g[0];
    if v0 <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            order: 0,
            value: v0,
        });
    }
    // grev[n-1-lag] = γ(lag), so the order-ord inner products below run over
    // contiguous forward slices (the hot loops of the whole crate).
    let grev: Vec<f64> = g.iter().rev().copied().collect();

    // Column-major solution storage keeps per-column updates contiguous.
    let mut cols: Vec<Vec<f64>> = (0..m).map(|_| vec![0.0; n]).collect();
    for (c, col) in cols.iter_mut().enumerate() {
        col[0] = rhs[[0, c]] / v0;
    }
    let mut logdet = v0.ln();
    let mut v = v0;
    // Forward prediction coefficients of the current order and their
    // reversal: y[j] multiplies X_{ord-1-j}, yrev[j] = y[ord-1-j].
    let mut y: Vec<f64> = Vec::with_capacity(n.saturating_sub(1));
    let mut yrev: Vec<f64> = Vec::with_capacity(n.saturating_sub(1));
    let mut scratch: Vec<f64> = Vec::with_capacity(n.saturating_sub(1));

    for ord in 1..n {
        // Extend the predictor from order ord-1 to ord:
        // k = (γ(ord) − Σ_j γ(ord-1-j)·y_j) / v.
        let len = y.len();
        let tail = &grev[n - ord..]; // γ(ord-1), …, γ(0)
        let e = g[ord] - dot(&tail[..len], &y);
        let k = e / v;
        scratch.clear();
        scratch.extend(y.iter().zip(&yrev).map(|(a, b)| a - k * b));
        scratch.push(k);
        // yrev_new = [k, yrev − k·y].
        yrev.iter_mut().zip(&y).for_each(|(r, &a)| *r -= k * a);
        yrev.insert(0, k);
        std::mem::swap(&mut y, &mut scratch);
        v *= 1.0 - k * k;
        if v <= 0.0 || !v.is_finite() {
            return Err(Error::NotPositiveDefinite {
                order: ord,
                value: v,
            });
        }
        logdet += v.ln();

        // Extend each solution column: e = b_ord − Σ_j γ(ord-j)·x_j.
        let tail = &grev[n - 1 - ord..n - 1]; // γ(ord), …, γ(1)
        for (c, col) in cols.iter_mut().enumerate() {
            let e = rhs[[ord, c]] - dot(tail, &col[..ord]);
            let mu = e / v;
            col[..ord]
                .iter_mut()
                .zip(&yrev)
                .for_each(|(x, &r)| *x -= mu * r);
            col[ord] = mu;
        }
    }

    let mut x = Array2::<f64>::zeros((n, m));
    for (c, col) in cols.iter().enumerate() {
        for (r, &val) in col.iter().enumerate() {
            x[[r, c]] = val;
        }
    }
    Ok(ToeplitzSolve {
        solution: x,
        logdet,
    })
}

// Four accumulators let the backend vectorize the reduction; strict
// left-to-right summation would serialize it.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let mut acc = [0.0f64; 4];
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..n {
        s += a[j] * b[j];
    }
    s
}

/// `log|Toeplitz(acf)|` without a right-hand side.
pub fn dl_logdet(acf: &AcfSeq) -> Result<f64> {
    let empty = Array2::<f64>::zeros((acf.len(), 0));
    Ok(dl_solve(acf, &empty)?.logdet)
}

/// Innovation representation of `Toeplitz(acf)`: reversed prediction
/// coefficients at every order and the innovation variances.
/// `coeffs_rev[m][j]` multiplies X_j in the one-step predictor of X_m from
/// (X_0, …, X_{m−1}); `vars[m]` is the conditional variance at order m.
pub(crate) struct Innovations {
    pub coeffs_rev: Vec<Vec<f64>>,
    pub vars: Vec<f64>,
}

pub(crate) fn innovations(acf: &AcfSeq) -> Result<Innovations> {
    let n = acf.len();
    let g = acf.values();
    if g[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            order: 0,
            value: g[0],
        });
    }
    let grev: Vec<f64> = g.iter().rev().copied().collect();
    let mut coeffs_rev: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut vars = Vec::with_capacity(n);
    coeffs_rev.push(Vec::new());
    vars.push(g[0]);
    let mut y: Vec<f64> = Vec::new();
    let mut yrev: Vec<f64> = Vec::new();
    let mut scratch: Vec<f64> = Vec::new();
    let mut v = g[0];
    for ord in 1..n {
        let len = y.len();
        let e = g[ord] - dot(&grev[n - ord..n - ord + len], &y);
        let k = e / v;
        scratch.clear();
        scratch.extend(y.iter().zip(&yrev).map(|(a, b)| a - k * b));
        scratch.push(k);
        yrev.iter_mut().zip(&y).for_each(|(r, &a)| *r -= k * a);
        yrev.insert(0, k);
        std::mem::swap(&mut y, &mut scratch);
        v *= 1.0 - k * k;
        if v <= 0.0 || !v.is_finite() {
            return Err(Error::NotPositiveDefinite {
                order: ord,
                value: v,
            });
        }
        coeffs_rev.push(yrev.clone());
        vars.push(v);
    }
    Ok(Innovations { coeffs_rev, vars })
}

/// Product of a (possibly rectangular, non-symmetric) Toeplitz matrix with a
/// vector via circulant embedding and the FFT, O(L log L) with L the next
/// power of two at or above rows+cols−1.
///
/// `first_row` and `first_col` define the matrix; they must agree on the
/// top-left element, and `x.len()` must equal `first_row.len()`.
pub fn toeplitz_matvec(first_row: &[f64], first_col: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let ncols = first_row.len();
    let nrows = first_col.len();
    if ncols == 0 || nrows == 0 {
        return Err(Error::invalid("empty Toeplitz row or column"));
    }
    if first_row[0] != first_col[0] {
        return Err(Error::invalid(
            "first_row[0] and first_col[0] must be the same element",
        ));
    }
    if x.len() != ncols {
        return Err(Error::invalid(format!(
            "vector length {} does not match {} columns",
            x.len(),
            ncols
        )));
    }

    let len = (nrows + ncols - 1).next_power_of_two();
    let mut c = vec![Complex::new(0.0, 0.0); len];
    for (i, &v) in first_col.iter().enumerate() {
        c[i].re = v;
    }
    for j in 1..ncols {
        c[len - j].re = first_row[j];
    }
    let mut xx = vec![Complex::new(0.0, 0.0); len];
    for (j, &v) in x.iter().enumerate() {
        xx[j].re = v;
    }

    // The planner caches plans per length; reusing it across the many
    // filtered-ACF evaluations of one fit matters.
    thread_local! {
        static PLANNER: std::cell::RefCell<FftPlanner<f64>> =
            std::cell::RefCell::new(FftPlanner::new());
    }
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);
        fft.process(&mut c);
        fft.process(&mut xx);
        for (a, b) in c.iter_mut().zip(&xx) {
            *a *= b;
        }
        ifft.process(&mut c);
    });
    let scale = 1.0 / len as f64;
    Ok(c[..nrows].iter().map(|z| z.re * scale).collect())
}

/// Draws `n_paths` exact samples of an N-long stationary Gaussian vector with
/// covariance `Toeplitz(acf)`, each with `cols` independent columns, using
/// the Durbin-Levinson innovations recursion. Deterministic given `seed`;
/// path p consumes its own substream derived from `(seed, p)`, so results do
/// not depend on scheduling.
pub fn simulate_stationary(
    acf: &AcfSeq,
    n_paths: usize,
    cols: usize,
    seed: u64,
) -> Result<Vec<Array2<f64>>> {
    let n = acf.len();
    let inn = innovations(acf)?;
    let sds: Vec<f64> = inn.vars.iter().map(|v| v.sqrt()).collect();

    (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "simulate-path", p as u64));
            let mut series: Vec<Vec<f64>> = (0..cols).map(|_| vec![0.0; n]).collect();
            for m in 0..n {
                let coef = &inn.coeffs_rev[m];
                for col in series.iter_mut() {
                    let mean = dot(coef, &col[..m]);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    col[m] = mean + sds[m] * z;
                }
            }
            let mut out = Array2::<f64>::zeros((n, cols));
            for (c, col) in series.iter().enumerate() {
                for (r, &val) in col.iter().enumerate() {
                    out[[r, c]] = val;
                }
            }
            Ok(out)
        })
        .collect()
}
