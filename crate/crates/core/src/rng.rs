//! Seedable, platform-independent random streams.
//!
//! Every stream is ChaCha8 keyed by
//! `SHA-256("posekit/v1" 0x00 domain 0x00 label 0x00 seed_le64)`, and the
//! ChaCha stream id selects a sub-sequence (for the sampler: the draw index).
//! Floats are built from the top 53 bits of a `u64`, so the same key and
//! stream produce bit-identical values everywhere.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

pub struct Stream {
    rng: ChaCha8Rng,
}

pub fn derive_key(domain: &str, label: &str, seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"posekit/v1\0");
    h.update(domain.as_bytes());
    h.update([0]);
    h.update(label.as_bytes());
    h.update([0]);
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

/// Folds a derived key into a 64-bit seed, for handing down to child streams.
pub fn derive_seed(domain: &str, label: &str, seed: u64) -> u64 {
    let key = derive_key(domain, label, seed);
    u64::from_le_bytes(key[..8].try_into().expect("8 bytes"))
}

impl Stream {
    pub fn new(domain: &str, label: &str, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(derive_key(domain, label, seed));
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Unbiased integer in `0..n` by rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % n;
            }
        }
    }
}
