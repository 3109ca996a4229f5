//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a splitmix64 mix of the scenario seed and a few integer tags, so
//! results never depend on iteration or thread order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `tag` into `seed`.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag.wrapping_add(GOLDEN)))
}

pub fn mix_all(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(seed, |acc, &t| mix(acc, t))
}

pub fn rng_for(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_all(seed, tags))
}

/// Stream tags for the independent parts of scenario generation.
pub mod stream {
    pub const BUYERS: u64 = 1;
    pub const SELLERS: u64 = 2;
    pub const PLACEMENT: u64 = 3;
    pub const LINK_RATE: u64 = 4;
    pub const GROUP_SOLVER: u64 = 5;
    pub const REPLICATE: u64 = 6;
}
