//! Seeded hashing shared by the compiler and the simulator.
//!
//! Per-item choices use `splitmix64(seed ^ fnv1a64(key))` so that each
//! decision depends only on the run seed and a stable key, never on
//! iteration order. Sequences (shuffles, random baselines) use
//! [`rand_chacha::ChaCha8Rng`], whose output is fixed across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit value for `key` under `seed`.
pub fn keyed(seed: u64, key: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(key.as_bytes()))
}

/// Stable value in `[0, 1)` for `key` under `seed`.
pub fn keyed_unit(seed: u64, key: &str) -> f64 {
    (keyed(seed, key) >> 11) as f64 / (1u64 << 53) as f64
}

/// Generator for an independent stream named `stream`.
pub fn stream_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(keyed(seed, stream))
}
