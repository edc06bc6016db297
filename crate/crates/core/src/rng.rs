//! Seeded, counter-based random streams.
//!
//! Every trace is generated in fixed-size chunks, and chunk `c` of a trace
//! of kind `k` draws from ChaCha8 stream `(k << 48) | c` under the key
//! derived from the seed. The output therefore does not depend on how
//! chunks are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Samples per independently seeded chunk.
pub const CHUNK: usize = 1 << 16;

/// Generator for chunk `chunk` of the stream family `tag` under `seed`.
pub fn stream(seed: u64, tag: u16, chunk: u64) -> ChaCha8Rng {
    debug_assert!(chunk < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 48) | chunk);
    rng
}

/// SplitMix64 finalizer; derives decorrelated child seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
