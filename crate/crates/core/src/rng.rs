//! Seed derivation. Every random object is drawn from its own ChaCha stream
//! keyed by `(seed, tag, index)`, so path `i` of a batch is the same no
//! matter how the batch is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Distinct components of one experiment never share a stream.
pub mod tag {
    pub const FBM: u64 = 0x01;
    pub const CLOCK: u64 = 0x02;
    pub const DRIFT_V: u64 = 0x03;
    pub const BROWNIAN: u64 = 0x04;
    pub const RESIDUAL: u64 = 0x05;
    pub const LHS: u64 = 0x10;
    pub const RHS: u64 = 0x11;
    pub const FACTOR: u64 = 0x12;
    pub const VARIANCE: u64 = 0x13;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a parent seed with a tag and an index into a child seed.
#[inline]
pub fn derive(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index)
}

/// Generator for item `index` of stream `tag`.
pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag, index))
}
