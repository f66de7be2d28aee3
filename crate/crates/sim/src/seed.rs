//! Seed derivation for trials and their random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `t`: output `t + 1` of a SplitMix64 generator seeded with
/// `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    mix64(seed.wrapping_add((trial as u64).wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Independent random streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Node placement, partition and sensor variances.
    Scenario = 0,
    /// Process noise of the targets.
    Truth = 1,
    /// Sensor noise.
    Measurement = 2,
}

pub fn stream_rng(trial_seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(stream as u64);
    rng
}
