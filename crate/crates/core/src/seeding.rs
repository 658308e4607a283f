//! Seed derivation. Every random stream in the crate is a `ChaCha8Rng`
//! seeded from a `u64` derived here, so results never depend on thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Child seed for a named sub-stream of `seed`.
pub fn derive(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Order-sensitive hash of a seed and an index list.
pub fn hash_indices(seed: u64, indices: &[usize]) -> u64 {
    indices.iter().fold(splitmix64(seed ^ indices.len() as u64), |h, &i| {
        splitmix64(h ^ (i as u64).wrapping_mul(0x2545_F491_4F6C_DD1D))
    })
}
