//! Stable hashing used for dataset digests and for the deterministic mocks.
//!
//! Everything here must produce the same output on every platform and every
//! run, so only SHA-256 over explicit byte encodings is used (no `std::hash`).

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hashes a sequence of string parts into a `u64`.
///
/// Parts are length-prefixed so `["ab", "c"]` and `["a", "bc"]` differ.
pub fn stable_u64(seed: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let out = hasher.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&out[..8]);
    u64::from_le_bytes(first)
}

/// Uniform draw in `[0, 1)` derived from [`stable_u64`].
pub fn stable_unit(seed: u64, parts: &[&str]) -> f64 {
    // 53 high bits give an exactly representable f64 in [0, 1).
    (stable_u64(seed, parts) >> 11) as f64 / (1u64 << 53) as f64
}
