//! Seed derivation. Every unit of work (instance, trace, batch) gets its own
//! ChaCha stream keyed by `(seed, stream, index)`, so serial and parallel
//! runs draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INSTANCES: u64 = 1;
pub const STREAM_MASK: u64 = 2;
pub const STREAM_INIT: u64 = 3;
pub const STREAM_SHUFFLE: u64 = 4;
pub const STREAM_PAIRS: u64 = 5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}

pub fn derived_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}
