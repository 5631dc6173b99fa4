//! Seed derivation for independent random streams.
//!
//! Every scenario run owns several streams (traffic, channel, bootstrap
//! traffic). Each stream is keyed by the scenario seed and a stream tag so
//! that sweeps over penetration or loss rate reuse identical randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a seed with a sequence of keys into a new 64-bit seed.
pub fn derive(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix64(seed), |acc, &k| mix64(acc ^ mix64(k)))
}

/// Maps a 64-bit hash onto [0, 1) using its top 53 bits.
#[inline]
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub const STREAM_TRAFFIC: u64 = 0x7452_4146;
pub const STREAM_CHANNEL: u64 = 0x4348_414e;
pub const STREAM_BOOTSTRAP: u64 = 0x424f_4f54;

pub fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, &[tag]))
}
