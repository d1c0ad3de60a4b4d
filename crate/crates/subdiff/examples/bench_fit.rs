// placed as an example for quick timing
use std::time::Instant;
use subdiff::csi::CsiKernel;
use subdiff::likelihood::{fit_mle, FitOptions};
use subdiff::models::{ModelKind, ModelSpec};
use subdiff::noise::{arma_filtered_acf, ArmaFilter};
use subdiff::toeplitz::simulate_stationary;

fn main() {
    let dt = 1.0 / 60.0;
    let n = 900;
    let base = CsiKernel::fbm(0.8).unwrap().increment_acf(n + 1, dt).unwrap();
    let acf = arma_filtered_acf(&ArmaFilter::ma1(0.3).unwrap(), &base, n).unwrap();
    let incs = simulate_stationary(&acf, 4, 2, 7).unwrap();

    for spec in [ModelSpec::new(ModelKind::Fma), ModelSpec::new(ModelKind::Fbm)] {
        let t0 = Instant::now();
        let mut evals = 0;
        for inc in &incs {
            let mut pos = ndarray::Array2::<f64>::zeros((n + 1, 2));
            for c in 0..2 {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += inc[[r, c]];
                    pos[[r + 1, c]] = acc;
                }
            }
            let fit = fit_mle(&spec, &pos, dt, &FitOptions::default()).unwrap();
            evals += fit.n_evals;
            println!("  {} alpha={:.4} se={:.4} rho={:?} evals={}", fit.model, fit.alpha, fit.se_alpha, fit.params.get("rho"), fit.n_evals);
        }
        println!("{:?}: {:.2?} total for 4 fits ({} NM evals)", spec.kind, t0.elapsed(), evals);
    }
}
