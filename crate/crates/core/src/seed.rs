//! Deterministic seed derivation and random draws on spheres.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// One SplitMix64 step. Used as the mixing function for derived seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and two stream indices.
///
/// `derive_seed(s, i, j) = splitmix64(splitmix64(splitmix64(s) ^ i) ^ j)`.
pub fn derive_seed(master: u64, first: u64, second: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ first) ^ second)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw on the unit sphere in `R^n` (normalized standard Gaussian).
pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-300 {
            return v / norm;
        }
    }
}
