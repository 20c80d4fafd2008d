//! Seed derivation. Every stochastic component draws from a ChaCha stream
//! whose seed is a pure function of a run seed and a position (tick,
//! episode, generation), so any slice of a run can be replayed on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream label and an index.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ splitmix64(index)))
}

pub fn rng_for(seed: u64, stream: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, stream, index))
}

/// Stream labels; distinct constants keep the derived streams independent.
pub mod stream {
    pub const ARRIVALS: u64 = 1;
    pub const MARKET: u64 = 2;
    pub const JITTER: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const GA: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const POLICY: u64 = 7;
    pub const TRAIN: u64 = 8;
    pub const DROPOUT: u64 = 9;
    pub const CACHE: u64 = 10;
    pub const SCHEDULER: u64 = 11;
}
