//! Seeded random streams.
//!
//! Every random quantity in the crate comes from a ChaCha20 stream
//! (`rand_chacha::ChaCha20Rng`) keyed by a 64-bit seed. Child seeds are
//! derived with SplitMix64 so that a trial log only needs to store one seed
//! per stimulus to be replayed bit-exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream used for stimuli and data generation.
pub fn stream(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Stream used for an observer's internal noise. Kept on a separate ChaCha
/// stream id so it never overlaps a stimulus stream with the same seed.
pub fn observer_stream(seed: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for item `index` of a run keyed by `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn standard_normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}
