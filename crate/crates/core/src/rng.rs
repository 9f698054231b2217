//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by a master seed plus a path of
//! integer indices (period, trajectory, cell row/column, realization). The key
//! is folded through SplitMix64 and used to seed a ChaCha8 generator, so a
//! stream depends only on its key and never on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a path of indices.
pub fn split(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(seed.wrapping_add(GOLDEN)), |acc, &k| {
        mix64(acc ^ mix64(k.wrapping_add(GOLDEN).wrapping_mul(GOLDEN)))
    })
}

/// Generator for the stream identified by `(seed, path)`.
pub fn keyed_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split(seed, path))
}
