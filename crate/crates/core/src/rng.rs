//! Seeded random streams.
//!
//! Every stochastic draw in the crate comes from ChaCha8, a counter-based
//! generator. A single 64-bit experiment seed fixes the key; independent
//! trials use independent stream ids, so trials can run in any order or in
//! parallel and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::{Regime, Scalar};

pub type Rng = ChaCha8Rng;

/// Generator for `stream` under the experiment key `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Zero-mean Gaussian draw with `E|z|^2 = variance`; circular in the complex regime.
pub fn gaussian<S: Scalar>(rng: &mut Rng, variance: f64) -> S {
    match S::REGIME {
        Regime::Real => {
            let n: f64 = StandardNormal.sample(rng);
            S::from_re(n * libm::sqrt(variance))
        }
        Regime::Complex => {
            let sd = libm::sqrt(variance / 2.0);
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            S::from_parts(re * sd, im * sd)
        }
    }
}
