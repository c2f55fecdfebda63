//! Deterministic stream derivation for replication-parallel simulation.
//!
//! Every consumer of randomness addresses its stream by a path of integers
//! (replication, phase, iteration, ...). Streams are independent ChaCha8
//! generators seeded by a SplitMix64 hash of `(seed, path)`, so results do
//! not depend on thread scheduling or evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(seed ^ 0x243f_6a88_85a3_08d3);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p));
    }
    ChaCha8Rng::seed_from_u64(state)
}

/// Stream phases used by the simulation harness and the optimizers.
pub mod phase {
    pub const DATA: u64 = 1;
    pub const MC: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const BANDWIDTH: u64 = 4;
}
