//! Seed derivation. Every random stream in the simulator is a ChaCha8
//! generator keyed by a base seed plus a small tuple of stream tags, so
//! streams are independent of scheduling and worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Distinct tags keep unrelated consumers of the same base
/// seed from sharing draws.
pub mod stream {
    pub const DATA: u64 = 0x6461_7461;
    pub const PARTITION: u64 = 0x7061_7274;
    pub const NOISE: u64 = 0x6e6f_6973;
    pub const ARRIVAL: u64 = 0x6172_7276;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with an ordered list of tags into a 64-bit key.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t)))
}

/// Generator for the stream `(base, tags...)`.
pub fn stream_rng(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}
