//! Seeded random streams.
//!
//! Every episode owns independent ChaCha streams derived from `(seed, stream)`.
//! The market stream depends on the trial seed only, so all methods evaluated on
//! the same trial see the same price path, order arrivals and fill draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const MARKET_STREAM: u64 = 0;

/// Independent stream `stream` for `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn market(seed: u64) -> Rng {
    stream(seed, MARKET_STREAM)
}

/// Policy randomness for `seed`, keyed by the method so methods never share draws.
pub fn policy(seed: u64, key: u64) -> Rng {
    stream(seed, key | 1 << 63)
}

/// FNV-1a hash of a name, used as a stream key.
pub fn key_of(name: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h >> 1
}

/// Mixes two integers into a fresh seed (splitmix64 finalizer).
pub fn derive(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
