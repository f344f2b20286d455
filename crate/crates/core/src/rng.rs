//! Deterministic random substreams.
//!
//! Every random draw in the pipeline comes from a ChaCha8 stream seeded by a
//! counter-based mix of the master seed and a path of integers (subject,
//! trial, switch index, channel tag, ...). Substreams are independent of
//! execution order, so parallel generation produces bit-identical output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain-separation tags for per-segment channel substreams.
pub mod tag {
    pub const STRATEGY: u64 = 0x5354_5241;
    pub const HEOG: u64 = 0x4845_4f47;
    pub const NEMG: u64 = 0x4e45_4d47;
    pub const IMU: u64 = 0x494d_5530;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const TRAIN: u64 = 0x5452_4e30;
}

/// SplitMix64 finalizer; the standard 64-bit avalanche mix.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a master seed with a path of counters into one 64-bit stream id.
pub fn mix(master_seed: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master_seed);
    for &part in path {
        state = splitmix64(state ^ part.wrapping_mul(0xd6e8_feb8_6659_fd93));
    }
    state
}

/// Seeded substream for the given path.
pub fn stream(master_seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(master_seed, path))
}
