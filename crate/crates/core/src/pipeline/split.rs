use sha2::{Digest, Sha256};

use crate::types::Split;

/// Hashes `(key, seed)` to `[0, 1)` and buckets by cumulative fractions
/// (train, test, validation). Fractions are assumed validated.
pub fn assign_split(key: &str, fractions: &[f64; 3], seed: u64) -> Split {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(b"split:");
    h.update(key.as_bytes());
    let digest = h.finalize();
    let bits = u64::from_le_bytes(digest[..8].try_into().unwrap()) >> 11;
    let x = bits as f64 / (1u64 << 53) as f64;
    if x < fractions[0] {
        Split::Train
    } else if x < fractions[0] + fractions[1] {
        Split::Test
    } else {
        Split::Validation
    }
}
