//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`SimRng`] (ChaCha8, a
//! counter-based stream cipher generator), so a seed fully determines an
//! experiment on every platform.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

pub const RNG_NAME: &str = "ChaCha8";

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a label.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform unit direction in the zero-sum subspace `{v : 1ᵀv = 0}`.
/// Returns the zero vector when `n < 2`.
pub fn zero_sum_direction(rng: &mut SimRng, n: usize) -> DVector<f64> {
    if n < 2 {
        return DVector::zeros(n);
    }
    loop {
        let mut v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mean = v.mean();
        v.add_scalar_mut(-mean);
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Radius for a uniform draw from a `dim`-dimensional ball of radius `r`.
pub fn ball_radius(rng: &mut SimRng, r: f64, dim: usize) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let u: f64 = rng.random();
    r * u.powf(1.0 / dim as f64)
}

/// Uniform draw from the `r`-ball of `{(u, v) ∈ ℝⁿ × ℝⁿ : 1ᵀu = 0, 1ᵀv = 0}`.
pub fn tangent_ball_sample(rng: &mut SimRng, n: usize, r: f64) -> (DVector<f64>, DVector<f64>) {
    let dim = 2 * n.saturating_sub(1);
    if dim == 0 || r == 0.0 {
        return (DVector::zeros(n), DVector::zeros(n));
    }
    // An isotropic Gaussian projected onto the subspace stays isotropic
    // there, so normalizing gives a uniform direction.
    loop {
        let mut u = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (mu, mv) = (u.mean(), v.mean());
        u.add_scalar_mut(-mu);
        v.add_scalar_mut(-mv);
        let norm = (u.norm_squared() + v.norm_squared()).sqrt();
        if norm > 1e-12 {
            let scale = ball_radius(rng, r, dim) / norm;
            return (u * scale, v * scale);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sum_direction_is_unit_and_balanced() {
        let mut rng = seeded(3);
        for n in [2, 5, 20] {
            let v = zero_sum_direction(&mut rng, n);
            assert!((v.norm() - 1.0).abs() < 1e-12);
            assert!(v.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(9, 4), derive_seed(9, 4));
    }
}
