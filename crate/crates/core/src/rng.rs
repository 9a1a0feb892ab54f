//! Counter-based random streams.
//!
//! Every consumer of randomness derives its generator from a base seed plus a
//! small tuple of counters (frame, stage, particle index), so results do not
//! depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a stream label.
pub fn derive(seed: u64, label: u64) -> u64 {
    mix(seed ^ mix(label.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Generator for stream `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
