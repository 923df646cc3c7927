//! Seeded randomness. Every stochastic routine in this crate takes an
//! explicit `&mut SeededRng`; there is no global generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The one generator type used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform sample in `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut SeededRng) -> f64 {
    rng.random::<f64>()
}

/// Standard normal sample via Box-Muller.
pub fn standard_normal(rng: &mut SeededRng) -> f64 {
    loop {
        let u1 = rng.random::<f64>();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2 = rng.random::<f64>();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        return r * libm::cos(2.0 * core::f64::consts::PI * u2);
    }
}

/// Gamma(shape, 1) sample, Marsaglia-Tsang. Used by the Dirichlet
/// Monte-Carlo oracle in tests and by nothing on the training path.
pub fn gamma_sample(rng: &mut SeededRng, shape: f64) -> f64 {
    if shape < 1.0 {
        // boost: Gamma(a) = Gamma(a+1) * U^(1/a)
        let g = gamma_sample(rng, shape + 1.0);
        let u = uniform(rng).max(f64::MIN_POSITIVE);
        return g * libm::pow(u, 1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / libm::sqrt(9.0 * d);
    loop {
        let x = standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v3 = v * v * v;
        let u = uniform(rng).max(f64::MIN_POSITIVE);
        if libm::log(u) < 0.5 * x * x + d - d * v3 + d * libm::log(v3) {
            return d * v3;
        }
    }
}
