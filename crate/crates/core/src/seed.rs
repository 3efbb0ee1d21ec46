//! Seed derivation. Every stochastic component receives its own stream
//! derived from the single run seed, so results do not depend on the order
//! in which components consume randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `derive(seed, stream, index)` = mix(mix(seed ^ mix(stream)) ^ index).
///
/// Per-sample seeds use stream [`streams::SCENE`] and the sample index.
pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    mix(mix(seed ^ mix(stream)) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub mod streams {
    pub const SCENE: u64 = 1;
    pub const RENDER: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const INIT: u64 = 5;
    pub const CENTERS: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const ENQUEUE: u64 = 8;
    pub const DROPOUT: u64 = 9;
}
