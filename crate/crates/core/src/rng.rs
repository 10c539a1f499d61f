//! Seeded random streams keyed by `(seed, chunk id, purpose)`.
//!
//! Every randomized step draws from its own stream, so results do not depend on
//! the order in which chunks are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    key: [u8; 32],
}

impl RngStream {
    pub fn new(seed: u64, chunk_id: &str, purpose: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update((chunk_id.len() as u64).to_le_bytes());
        hasher.update(chunk_id.as_bytes());
        hasher.update(purpose.as_bytes());
        Self {
            seed,
            key: hasher.finalize().into(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stable 64-bit stream identifier.
    pub fn stream_id(&self) -> u64 {
        u64::from_le_bytes(self.key[..8].try_into().unwrap())
    }

    /// A fresh generator positioned at the start of the stream.
    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::from_seed(self.key)
    }
}
