//! Matrix-normal likelihood for location-scale increment models.
//!
//! Increments ΔY (N×k) of the location-scale model follow
//! MatNorm(Fβ, V_φ, Σ): vec(ΔY) ~ N(vec(Fβ), Σ ⊗ V_φ) with V_φ the Toeplitz
//! increment covariance. For fixed kernel/noise parameters φ the MLEs of
//! (β, Σ) are available in closed form, so the numerical optimization runs
//! over φ alone on the profile likelihood. All log-likelihoods include the
//! −(Nk/2)·log 2π constant so that values are comparable across models and
//! usable in composite-likelihood scores.

mod fit;

pub use fit::{fit_mle, increments_of, FitOptions, FitResult};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::toeplitz::{dl_logdet, dl_solve, AcfSeq};

const LN_2PI: f64 = 1.8378770664093453;

/// Data, row covariance and drift design of one matrix-normal model.
#[derive(Debug, Clone)]
pub struct MatNormModel {
    /// N×k increment matrix.
    pub data: Array2<f64>,
    /// Increment autocovariance, N lags.
    pub acf: AcfSeq,
    /// N×d drift increment matrix; `None` means no drift (d = 0).
    pub drift: Option<Array2<f64>>,
}

impl MatNormModel {
    pub fn new(data: Array2<f64>, acf: AcfSeq, drift: Option<Array2<f64>>) -> Result<Self> {
        let n = data.nrows();
        if n == 0 || data.ncols() == 0 {
            return Err(Error::invalid("increment matrix is empty"));
        }
        if acf.len() != n {
            return Err(Error::invalid(format!(
                "ACF has {} lags but data has {n} rows",
                acf.len()
            )));
        }
        if let Some(f) = &drift {
            if f.nrows() != n || f.ncols() == 0 {
                return Err(Error::invalid(format!(
                    "drift matrix is {}x{}, expected {n} rows",
                    f.nrows(),
                    f.ncols()
                )));
            }
        }
        Ok(MatNormModel { data, acf, drift })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn k(&self) -> usize {
        self.data.ncols()
    }

    pub fn d(&self) -> usize {
        self.drift.as_ref().map_or(0, |f| f.ncols())
    }
}

fn chol(m: &Array2<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let dm = nalgebra::DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]]);
    nalgebra::Cholesky::new(dm)
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

fn logdet_spd(m: &Array2<f64>, what: &str) -> Result<f64> {
    Ok(2.0 * chol(m, what)?.l().diagonal().map(|d| d.ln()).sum())
}

/// Matrix-normal log density of the model's data at (β, Σ):
/// −½·tr{Σ⁻¹(ΔY−Fβ)ᵀV⁻¹(ΔY−Fβ)} − (N/2)·log|Σ| − (k/2)·log|V| − (Nk/2)·log 2π.
pub fn matnorm_loglik(
    model: &MatNormModel,
    beta: Option<&Array2<f64>>,
    sigma: &Array2<f64>,
) -> Result<f64> {
    let (n, k) = (model.n(), model.k());
    if sigma.nrows() != k || sigma.ncols() != k {
        return Err(Error::invalid(format!(
            "sigma is {}x{}, expected {k}x{k}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let resid = match (&model.drift, beta) {
        (Some(f), Some(b)) => {
            if b.nrows() != f.ncols() || b.ncols() != k {
                return Err(Error::invalid(format!(
                    "beta is {}x{}, expected {}x{k}",
                    b.nrows(),
                    b.ncols(),
                    f.ncols()
                )));
            }
            &model.data - &f.dot(b)
        }
        (None, Some(_)) => {
            return Err(Error::invalid("beta supplied but model has no drift matrix"))
        }
        (Some(_), None) => {
            return Err(Error::invalid("model has a drift matrix but beta is missing"))
        }
        (None, None) => model.data.clone(),
    };

    let solve = dl_solve(&model.acf, &resid)?;
    let cross = resid.t().dot(&solve.solution); // k×k = RᵀV⁻¹R
    let sig_chol = chol(sigma, "sigma")?;
    let logdet_sigma = 2.0 * sig_chol.l().diagonal().map(|d| d.ln()).sum();
    let cross_na = nalgebra::DMatrix::from_fn(k, k, |i, j| cross[[i, j]]);
    let trace = sig_chol.solve(&cross_na).trace();

    Ok(-0.5 * trace
        - 0.5 * n as f64 * logdet_sigma
        - 0.5 * k as f64 * solve.logdet
        - 0.5 * (n * k) as f64 * LN_2PI)
}

/// Closed-form conditional MLE of (β, Σ) and the profile log-likelihood:
/// β̂ = (FᵀV⁻¹F)⁻¹FᵀV⁻¹Y, Σ̂ = (Y−Fβ̂)ᵀV⁻¹(Y−Fβ̂)/N,
/// ℓ_prof = −½(k·log|V| + N·log|Σ̂| + Nk) − (Nk/2)·log 2π.
#[derive(Debug, Clone)]
pub struct ProfileFit {
    pub beta: Option<Array2<f64>>,
    pub sigma: Array2<f64>,
    pub loglik: f64,
}

pub fn profile_mle(model: &MatNormModel) -> Result<ProfileFit> {
    let (n, k, d) = (model.n(), model.k(), model.d());

    // One Durbin-Levinson pass over [F | Y].
    let mut rhs = Array2::<f64>::zeros((n, d + k));
    if let Some(f) = &model.drift {
        rhs.slice_mut(ndarray::s![.., ..d]).assign(f);
    }
    rhs.slice_mut(ndarray::s![.., d..]).assign(&model.data);
    let solve = dl_solve(&model.acf, &rhs)?;
    let vinv_f = solve.solution.slice(ndarray::s![.., ..d]);
    let vinv_y = solve.solution.slice(ndarray::s![.., d..]);

    let (beta, vinv_resid, resid) = if d > 0 {
        let f = model.drift.as_ref().unwrap();
        let gram = f.t().dot(&vinv_f); // d×d, symmetric PD for full-rank F
        let fy = f.t().dot(&vinv_y); // d×k
        let gram_na = nalgebra::DMatrix::from_fn(d, d, |i, j| gram[[i, j]]);
        let fy_na = nalgebra::DMatrix::from_fn(d, k, |i, j| fy[[i, j]]);
        let gram_chol = nalgebra::Cholesky::new(gram_na).ok_or_else(|| {
            Error::Singular("FᵀV⁻¹F is rank deficient; drift regressors are collinear".into())
        })?;
        let beta_na = gram_chol.solve(&fy_na);
        let beta = Array2::from_shape_fn((d, k), |(i, j)| beta_na[(i, j)]);
        let resid = &model.data - &f.dot(&beta);
        let vinv_resid = &vinv_y.to_owned() - &vinv_f.dot(&beta);
        (Some(beta), vinv_resid, resid)
    } else {
        (None, vinv_y.to_owned(), model.data.clone())
    };

    let sigma = resid.t().dot(&vinv_resid) / n as f64;
    let logdet_sigma = logdet_spd(&sigma, "profiled sigma")?;
    let loglik = -0.5
        * (k as f64 * solve.logdet + n as f64 * logdet_sigma + (n * k) as f64)
        - 0.5 * (n * k) as f64 * LN_2PI;

    Ok(ProfileFit {
        beta,
        sigma,
        loglik,
    })
}

/// The Kullback-Leibler misspecification objective between a true
/// matrix-normal law (Σ, V) and a candidate (Σ*, V*):
/// tr(Σ*⁻¹Σ)·tr(V*⁻¹V) + log(|Σ*|ᴺ|V*|ᵏ / (|Σ|ᴺ|V|ᵏ)).
/// Equals 2·KL + Nk, so its minimum over candidates is N·k at the truth.
pub fn kl_objective(
    true_acf: &AcfSeq,
    true_sigma: &Array2<f64>,
    cand_acf: &AcfSeq,
    cand_sigma: &Array2<f64>,
) -> Result<f64> {
    let n = true_acf.len();
    let k = true_sigma.nrows();
    if cand_acf.len() != n {
        return Err(Error::invalid("ACF lengths differ"));
    }
    if true_sigma.ncols() != k || cand_sigma.nrows() != k || cand_sigma.ncols() != k {
        return Err(Error::invalid("sigma shapes differ"));
    }

    let v_true = true_acf.to_dense();
    let solve = dl_solve(cand_acf, &v_true)?;
    let trace_v: f64 = (0..n).map(|i| solve.solution[[i, i]]).sum();
    let logdet_v_cand = solve.logdet;
    let logdet_v_true = dl_logdet(true_acf)?;

    let sig_chol = chol(cand_sigma, "candidate sigma")?;
    let logdet_s_cand = 2.0 * sig_chol.l().diagonal().map(|d| d.ln()).sum();
    let logdet_s_true = logdet_spd(true_sigma, "true sigma")?;
    let true_na = nalgebra::DMatrix::from_fn(k, k, |i, j| true_sigma[[i, j]]);
    let trace_s = sig_chol.solve(&true_na).trace();

    Ok(trace_s * trace_v
        + n as f64 * (logdet_s_cand - logdet_s_true)
        + k as f64 * (logdet_v_cand - logdet_v_true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_pd_acf;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense multivariate-normal oracle on vec(ΔY) with covariance Σ ⊗ V.
    pub(crate) fn kronecker_loglik(
        data: &Array2<f64>,
        acf: &AcfSeq,
        drift: Option<&Array2<f64>>,
        beta: Option<&Array2<f64>>,
        sigma: &Array2<f64>,
    ) -> f64 {
        let (n, k) = data.dim();
        let v = acf.to_dense();
        let mut cov = nalgebra::DMatrix::<f64>::zeros(n * k, n * k);
        for a in 0..k {
            for b in 0..k {
                for i in 0..n {
                    for j in 0..n {
                        cov[(a * n + i, b * n + j)] = sigma[[a, b]] * v[[i, j]];
                    }
                }
            }
        }
        let mean = match (drift, beta) {
            (Some(f), Some(bt)) => f.dot(bt),
            _ => Array2::zeros((n, k)),
        };
        let mut z = nalgebra::DVector::<f64>::zeros(n * k);
        for c in 0..k {
            for r in 0..n {
                z[c * n + r] = data[[r, c]] - mean[[r, c]];
            }
        }
        let chol = nalgebra::Cholesky::new(cov).expect("oracle covariance not PD");
        let logdet = 2.0 * chol.l().diagonal().map(|d| d.ln()).sum();
        let quad = z.dot(&chol.solve(&z));
        -0.5 * (quad + logdet + (n * k) as f64 * LN_2PI)
    }

    fn random_spd(rng: &mut impl Rng, k: usize) -> Array2<f64> {
        let a = Array2::from_shape_fn((k, k), |_| rng.gen_range(-1.0..1.0));
        let mut s = a.t().dot(&a);
        for i in 0..k {
            s[[i, i]] += 0.5;
        }
        s
    }

    #[test]
    fn standard_normal_scalar_case() {
        let model = MatNormModel::new(
            Array2::zeros((1, 1)),
            AcfSeq::new(vec![1.0], 1.0).unwrap(),
            None,
        )
        .unwrap();
        let ll = matnorm_loglik(&model, None, &Array2::eye(1)).unwrap();
        assert_abs_diff_eq!(ll, -0.5 * LN_2PI, epsilon = 1e-14);
    }

    #[test]
    fn matches_kronecker_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..25 {
            let n = rng.gen_range(2..12);
            let k = rng.gen_range(1..=3);
            let d = rng.gen_range(0..=2usize);
            let acf = random_pd_acf(&mut rng, n, 1.0);
            let data = Array2::from_shape_fn((n, k), |_| rng.gen_range(-2.0..2.0));
            let drift = (d > 0)
                .then(|| Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0)));
            let beta = (d > 0)
                .then(|| Array2::from_shape_fn((d, k), |_| rng.gen_range(-1.0..1.0)));
            let sigma = random_spd(&mut rng, k);

            let model = MatNormModel::new(data.clone(), acf.clone(), drift.clone()).unwrap();
            let fast = matnorm_loglik(&model, beta.as_ref(), &sigma).unwrap();
            let oracle = kronecker_loglik(&data, &acf, drift.as_ref(), beta.as_ref(), &sigma);
            assert_abs_diff_eq!(fast, oracle, epsilon = 1e-10 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn scaling_identity_sigma_versus_v() {
        // Multiplying Σ by c and dividing the ACF by c leaves the likelihood
        // unchanged: (cΣ) ⊗ (V/c) = Σ ⊗ V.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 8;
        let acf = random_pd_acf(&mut rng, n, 1.0);
        let data = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let sigma = random_spd(&mut rng, 2);
        let c = 3.7;

        let m1 = MatNormModel::new(data.clone(), acf.clone(), None).unwrap();
        let l1 = matnorm_loglik(&m1, None, &sigma).unwrap();
        let m2 = MatNormModel::new(data, acf.scaled(1.0 / c).unwrap(), None).unwrap();
        let l2 = matnorm_loglik(&m2, None, &(&sigma * c)).unwrap();
        assert_abs_diff_eq!(l1, l2, epsilon = 1e-9 * l1.abs());
    }

    #[test]
    fn profile_collapses_without_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 16;
        let acf = random_pd_acf(&mut rng, n, 1.0);
        let data = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let model = MatNormModel::new(data.clone(), acf.clone(), None).unwrap();
        let fit = profile_mle(&model).unwrap();
        assert!(fit.beta.is_none());
        let solve = dl_solve(&acf, &data).unwrap();
        let expect = data.t().dot(&solve.solution) / n as f64;
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(fit.sigma[[i, j]], expect[[i, j]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn profile_is_an_upper_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 32;
        let k = 2;
        let acf = random_pd_acf(&mut rng, n, 1.0);
        let data = Array2::from_shape_fn((n, k), |_| rng.gen_range(-2.0..2.0));
        let drift = Array2::from_shape_fn((n, 1), |_| rng.gen_range(-1.0..1.0));
        let model = MatNormModel::new(data, acf, Some(drift)).unwrap();
        let prof = profile_mle(&model).unwrap();

        // The profile value is attained at the closed-form argmax...
        let at_argmax =
            matnorm_loglik(&model, prof.beta.as_ref(), &prof.sigma).unwrap();
        assert_abs_diff_eq!(prof.loglik, at_argmax, epsilon = 1e-8 * prof.loglik.abs());

        // ...and dominates 100 random probes.
        for _ in 0..100 {
            let beta = Array2::from_shape_fn((1, k), |_| rng.gen_range(-2.0..2.0));
            let sigma = random_spd(&mut rng, k);
            let ll = matnorm_loglik(&model, Some(&beta), &sigma).unwrap();
            assert!(
                ll <= prof.loglik + 1e-8 * prof.loglik.abs(),
                "probe {ll} exceeds profile {}",
                prof.loglik
            );
        }
    }

    #[test]
    fn kl_objective_is_nk_at_truth_and_larger_elsewhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 24;
        let k = 2;
        let acf = random_pd_acf(&mut rng, n, 1.0);
        let sigma = random_spd(&mut rng, k);
        let at_truth = kl_objective(&acf, &sigma, &acf, &sigma).unwrap();
        assert_abs_diff_eq!(at_truth, (n * k) as f64, epsilon = 1e-8);

        for _ in 0..25 {
            let cand_acf = random_pd_acf(&mut rng, n, 1.0);
            let cand_sigma = random_spd(&mut rng, k);
            let v = kl_objective(&acf, &sigma, &cand_acf, &cand_sigma).unwrap();
            assert!(v >= at_truth - 1e-8, "objective {v} below minimum");
        }
    }
}
