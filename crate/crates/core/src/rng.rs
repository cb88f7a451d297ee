//! Seeded random streams.
//!
//! Every random object is drawn from a `ChaCha8Rng` seeded with a 64-bit
//! value. Independent streams for trials are obtained by mixing a master seed
//! with the trial index, so trials can run in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SpsRng = ChaCha8Rng;

pub fn stream(seed: u64) -> SpsRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `k` from `master`.
pub fn mix(master: u64, k: u64) -> u64 {
    splitmix64(splitmix64(master) ^ k.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
