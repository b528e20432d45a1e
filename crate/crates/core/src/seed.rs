//! Seed derivation for reproducible parallel generation.
//!
//! Every generator in the crate takes an explicit 64-bit seed. When one
//! master seed has to fan out into many independent streams (the M training
//! sets of a bundle, the settings of a grid), sub-seeds are derived with a
//! splitmix64 step: the finalizer is a bijection on 64-bit state, so distinct
//! indices can never collide for a fixed master seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer (Steele, Lea & Flood).
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the sub-seed for stream `index` of `master`.
///
/// Equals the `index`-th output of a splitmix64 generator seeded with
/// `master`; injective in `index` for a fixed master seed.
pub fn sub_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// The RNG used everywhere a seeded stream is needed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn sub_seeds_distinct_for_distinct_indices() {
        let mut seen = HashSet::new();
        for i in 0..100_000u64 {
            assert!(seen.insert(sub_seed(42, i)), "collision at index {i}");
        }
    }

    #[test]
    fn sub_seed_is_pure() {
        assert_eq!(sub_seed(7, 3), sub_seed(7, 3));
        assert_ne!(sub_seed(7, 3), sub_seed(8, 3));
    }
}
