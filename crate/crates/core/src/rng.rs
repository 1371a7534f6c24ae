//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha12 stream derived from a
//! 64-bit user seed plus a purpose label, so that e.g. training and
//! evaluation never share a stream and runs replay bit-exactly.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Derive an independent ChaCha12 stream from `(seed, label)`.
pub fn seed_stream(seed: u64, label: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(key)
}
