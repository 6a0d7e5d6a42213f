use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::{Embedding, EmbeddingProvider};
use crate::error::EmbedError;
use crate::text::tokenize;

/// Bag-of-hashed-tokens embedder.
///
/// Every token is hashed with a fixed seed into one of `dim` buckets with a
/// hash-derived sign; bucket counts are L2-normalized. Word order is ignored,
/// so similarity only reflects shared tokens (plus rare bucket collisions).
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    /// Bucket index and sign for one token.
    pub fn slot(&self, token: &str) -> (usize, f64) {
        let h = xxh3_64_with_seed(token.as_bytes(), self.seed);
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        ((h % self.dim as u64) as usize, sign)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut tokens = tokenize(trimmed);
        if tokens.is_empty() {
            // punctuation-only text still gets a stable vector
            tokens.push(trimmed.to_string());
        }
        let mut v = vec![0.0; self.dim];
        for t in &tokens {
            let (bucket, sign) = self.slot(t);
            v[bucket] += sign;
        }
        // Opposite-sign collisions can cancel everything; fall back to the raw text.
        if v.iter().all(|c| *c == 0.0) {
            let (bucket, sign) = self.slot(trimmed);
            v[bucket] = sign;
        }
        Embedding::normalized(v)
    }
}
