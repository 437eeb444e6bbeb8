//! Seed derivation.
//!
//! Every random decision in the crate is made by a [`ChaCha8Rng`] seeded from a
//! 64-bit value obtained by walking a derivation tree from an explicit root
//! seed. Children are addressed by integer index, so inserting or skipping work
//! at one node never shifts the streams seen by its siblings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed `index` of `seed`.
pub fn derive(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(1)))
}

/// Follows `path` down the derivation tree.
pub fn derive_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &i| derive(s, i))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named child streams used by the operators.
pub mod stream {
    pub const LABELED: u64 = 1;
    pub const UNLABELED: u64 = 2;
    pub const INIT: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const FOLDS: u64 = 5;
    pub const PIPELINE: u64 = 6;
    pub const SUGGEST: u64 = 7;
    pub const EPISODE: u64 = 8;
}
