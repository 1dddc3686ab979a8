//! Deterministic stream derivation for parallel ensembles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stream `(master, realization, step)`.
pub fn stream_seed(master: u64, realization: u64, step: u64) -> u64 {
    let h = mix(master.wrapping_add(GOLDEN));
    let h = mix(h ^ realization.wrapping_add(1).wrapping_mul(GOLDEN));
    mix(h ^ step.wrapping_add(1).wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub type StreamRng = ChaCha8Rng;

pub fn stream(master: u64, realization: u64, step: u64) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(master, realization, step))
}
