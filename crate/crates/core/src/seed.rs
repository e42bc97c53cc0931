//! Stable seed derivation.
//!
//! Every random choice in the toolkit is keyed by a seed derived from the
//! global `--seed` plus a tuple of labels. The derivation is SHA-256 over
//! length-prefixed parts, truncated to the first eight bytes (little endian),
//! so it is identical across platforms, releases and thread schedules.

use sha2::{Digest, Sha256};

/// Hash an ordered list of byte strings into a `u64`.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// Seed for one (pair, role, sample) masking or decoding decision.
pub fn pair_seed(global_seed: u64, pair_id: &str, role: &str, sample_index: u32) -> u64 {
    stable_hash(&[
        &global_seed.to_le_bytes(),
        pair_id.as_bytes(),
        role.as_bytes(),
        &sample_index.to_le_bytes(),
    ])
}

/// Seed for a named sub-stream of the global seed (dataset shuffle, split, sweep rows...).
pub fn stream_seed(global_seed: u64, stream: &str) -> u64 {
    stable_hash(&[&global_seed.to_le_bytes(), stream.as_bytes()])
}

/// Hex SHA-256 of arbitrary bytes; used for dataset hashes and fingerprints.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
