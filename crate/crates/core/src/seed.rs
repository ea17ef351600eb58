//! Deterministic sub-seed derivation.
//!
//! Every random draw in the simulator is keyed by the run seed plus a
//! purpose tag and the coordinates of the draw (tag address, cycle,
//! modality, ...). Observations are therefore pure functions of their
//! coordinates and can be evaluated in any order, including in parallel.

use rand_chacha::ChaCha8Rng;

/// Purpose tags keeping independent draw families decorrelated.
pub mod purpose {
    pub const TRAJECTORY: u64 = 0x01;
    pub const TAG_RESPONSE: u64 = 0x02;
    pub const TURN_ON_NOISE: u64 = 0x03;
    pub const QUERY_NOISE: u64 = 0x04;
    pub const CYCLE_JITTER: u64 = 0x05;
    pub const MISSED_READ: u64 = 0x06;
    pub const ANTENNA_OUTAGE: u64 = 0x07;
    pub const ONSET_DELAY: u64 = 0x08;
    pub const ECCENTRIC_SCALE: u64 = 0x09;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold `parts` into `seed` with a splitmix64 chain.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(seed);
    for &p in parts {
        state = splitmix64(state ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    state
}

/// A ChaCha stream for a derived sub-seed.
pub fn rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(mix(seed, parts))
}
