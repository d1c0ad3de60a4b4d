//! Derivative-free minimization: Nelder-Mead simplex with jittered restarts.
//!
//! The profile likelihoods this crate maximizes have no closed-form
//! gradients, are cheap to evaluate and low-dimensional (1–3 kernel/noise
//! parameters), which is exactly the regime where a restarted simplex is the
//! pragmatic choice. Infeasible points (constraint rejections, non-PD
//! covariances) are handled by returning a large finite penalty from the
//! objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Objective value used to reject infeasible parameter points.
pub const PENALTY: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct NmOptions {
    /// Total simplex runs: the first from the caller's start, the rest from
    /// jittered perturbations of the incumbent best.
    pub restarts: usize,
    /// Convergence when the simplex diameter drops below this.
    pub diam_tol: f64,
    /// Initial simplex edge length.
    pub init_step: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions {
            restarts: 10,
            diam_tol: 1e-8,
            init_step: 0.5,
            max_iters: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
    /// Best objective seen at the end of each restart.
    pub restart_trace: Vec<f64>,
}

/// Minimizes `f` by Nelder-Mead with restarts. Deterministic given
/// `opts.seed`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NmOptions) -> NmResult {
    let dim = x0.len();
    assert!(dim >= 1, "cannot optimize a zero-dimensional objective");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut evals = 0usize;
    let mut best_x = x0.to_vec();
    let mut best_f = f(x0);
    evals += 1;
    let mut converged = false;
    let mut trace = Vec::with_capacity(opts.restarts);

    for restart in 0..opts.restarts.max(1) {
        let scale = opts.init_step * 0.6f64.powi(restart as i32);
        let start: Vec<f64> = if restart == 0 {
            best_x.clone()
        } else {
            best_x
                .iter()
                .map(|&v| v + scale * rng.gen_range(-1.0..1.0))
                .collect()
        };
        let run = single_run(&mut f, &start, scale.max(1e-3), opts, &mut evals);
        if run.1 < best_f {
            best_f = run.1;
            best_x = run.0;
        }
        converged |= run.2;
        trace.push(best_f);
    }

    NmResult {
        x: best_x,
        f: best_f,
        evals,
        converged,
        restart_trace: trace,
    }
}

fn single_run<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    step: f64,
    opts: &NmOptions,
    evals: &mut usize,
) -> (Vec<f64>, f64, bool) {
    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            PENALTY
        } else {
            v
        }
    };
    simplex.push((x0.to_vec(), eval(x0, evals)));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, evals);
        simplex.push((x, v));
    }

    let (alpha, gamma, beta, delta) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;

    for _ in 0..opts.max_iters * dim.max(1) {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let diam = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0f64, f64::max);
        if diam < opts.diam_tol {
            converged = true;
            break;
        }

        let worst = simplex.len() - 1;
        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..worst].iter().map(|(x, _)| x[j]).sum::<f64>() / worst as f64)
            .collect();
        let xr: Vec<f64> = centroid
            .iter()
            .zip(&simplex[worst].0)
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let fr = eval(&xr, evals);

        if fr < simplex[0].1 {
            let xe: Vec<f64> = centroid
                .iter()
                .zip(&simplex[worst].0)
                .map(|(c, w)| c + gamma * (c - w))
                .collect();
            let fe = eval(&xe, evals);
            simplex[worst] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[worst - 1].1 {
            simplex[worst] = (xr, fr);
        } else {
            let (base, fb) = if fr < simplex[worst].1 {
                (xr.clone(), fr)
            } else {
                (simplex[worst].0.clone(), simplex[worst].1)
            };
            let xc: Vec<f64> = centroid
                .iter()
                .zip(&base)
                .map(|(c, w)| c + beta * (w - c))
                .collect();
            let fc = eval(&xc, evals);
            if fc < fb {
                simplex[worst] = (xc, fc);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best
                        .iter()
                        .zip(&entry.0)
                        .map(|(b, x)| b + delta * (x - b))
                        .collect();
                    let v = eval(&x, evals);
                    *entry = (x, v);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let (x, fv) = simplex.swap_remove(0);
    (x, fv, converged)
}
