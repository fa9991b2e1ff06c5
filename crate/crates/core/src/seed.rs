//! Deterministic seed derivation.
//!
//! Every stochastic component (weight init, shuffling, dropout masks, shift
//! draws, synthetic noise) derives its stream from a root seed plus a fixed
//! list of context words. Parallel and serial execution therefore consume
//! identical random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels, so unrelated consumers of one root seed never collide.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const SHIFT: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const PARTITION: u64 = 6;
    pub const SEARCH: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `parts` into `seed`, yielding an independent derived seed.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(seed);
    for &p in parts {
        s = splitmix64(s ^ splitmix64(p));
    }
    s
}

/// Seeded RNG for the derived stream.
pub fn rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}
