//! Seeded random streams.
//!
//! Every consumer of randomness derives its generator from the root seed and a
//! stream path, e.g. `(seed, [sample_index, run_index])`. ChaCha is a counter
//! based generator, so streams are independent of the order in which they are
//! created and parallel execution never reorders draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

// Stream tags keep unrelated consumers apart even when they share indices.
pub const TAG_SAMPLE: u64 = 0x5341_4d50;
pub const TAG_DECIDER: u64 = 0x4445_4349;
pub const TAG_TRAIN: u64 = 0x5452_4149;
pub const TAG_SOLVER: u64 = 0x534f_4c56;
pub const TAG_SYNTH: u64 = 0x5359_4e54;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a path of stream identifiers into a single 64-bit stream id.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Derives a child seed, for APIs that take a plain `u64` seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    splitmix64(seed ^ stream_id(path).rotate_left(17))
}

/// Generator for `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(path));
    rng
}
