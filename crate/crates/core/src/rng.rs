//! Seed derivation and stream construction.
//!
//! All stochastic steps (bootstrap draws, subsampling, feature subsets, fold
//! shuffles, synthetic scenes) pull from [`ChaCha8Rng`] streams whose seeds
//! are derived with [`mix`]. Deriving rather than sharing streams is what
//! keeps results identical under any parallel schedule: each tree, node,
//! stage or fold owns a generator that does not observe the others.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mix a base seed with a stream index into a new 64-bit seed.
///
/// This is the splitmix64 finalizer applied to `seed XOR (stream * GAMMA)`;
/// it decorrelates consecutive stream indices so `mix(s, 0)` and `mix(s, 1)`
/// share no obvious structure.
pub fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream))
}
