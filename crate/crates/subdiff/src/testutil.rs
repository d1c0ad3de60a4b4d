//! Shared helpers for unit tests.

use rand::Rng;

use crate::toeplitz::AcfSeq;

/// Random strictly PD autocovariance: nonnegative spectral mixture of
/// cosines plus a white-noise ridge.
pub(crate) fn random_pd_acf(rng: &mut impl Rng, n: usize, dt: f64) -> AcfSeq {
    let terms = rng.gen_range(1..=4);
    let mut g = vec![0.0; n];
    for _ in 0..terms {
        let w: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let a: f64 = rng.gen_range(0.1..1.0);
        for (h, gh) in g.iter_mut().enumerate() {
            *gh += a * (w * h as f64).cos();
        }
    }
    let ridge: f64 = rng.gen_range(0.05..0.5);
    g[0] += ridge;
    AcfSeq::new(g, dt).unwrap()
}
