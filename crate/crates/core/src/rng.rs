//! Seeded, portable random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] keyed by a root
//! seed and a *path* of integers naming the entity that owns the stream (a
//! student, a module, a tree, ...). The key is derived by folding the path
//! through SplitMix64, so stream `[dept, student]` is independent of how many
//! other students exist and of the order in which streams are created. This
//! is what lets parallel code reproduce serial output bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Distinct domains never share a key even for equal paths.
pub mod domain {
    pub const STUDENT: u64 = 0x5354_5544;
    pub const CATALOG: u64 = 0x4341_5441;
    pub const MODULE: u64 = 0x4d4f_4455;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const TREE: u64 = 0x5452_4545;
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the 256-bit ChaCha key for `path` under `seed`.
fn derive_key(seed: u64, path: &[u64]) -> [u8; 32] {
    let mut state = splitmix64(seed);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p.wrapping_add(GOLDEN_GAMMA)));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        state = splitmix64(state.wrapping_add(i as u64));
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Returns the independent stream identified by `path` under `seed`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_key(seed, path))
}
