//! Deterministic text embeddings via signed feature hashing.
//!
//! Stands in for a dense retrieval encoder: word unigrams plus per-token
//! character trigrams are hashed into a fixed number of signed buckets and
//! the result is L2-normalized. Identical text always maps to an identical
//! vector, which keeps retrieval and the feedback metrics reproducible.

use thiserror::Error;

use crate::text::tokenize;

/// Default embedding dimension.
pub const DEFAULT_DIM: usize = 256;

/// Default feature-hash seed, recorded in checkpoint metadata so artifacts
/// produced with different embedders never silently mix.
pub const DEFAULT_HASH_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// A fixed-dimension real vector, unit L2 norm except for the all-zero
/// vector produced by empty text.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// Cosine similarity between two vectors; 0.0 whenever either norm is zero.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch(a.dim(), b.dim()));
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Signed feature-hashing embedder over word unigrams and per-token
/// character trigrams.
#[derive(Debug, Clone, PartialEq)]
pub struct HashingEmbedder {
    dim: usize,
    hash_seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM, DEFAULT_HASH_SEED)
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize, hash_seed: u64) -> Self {
        assert!(dim >= 1, "embedding dimension must be at least 1");
        Self { dim, hash_seed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    /// Embeds text. Returns the all-zero vector for text with no tokens.
    pub fn embed(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f64; self.dim];
        for token in tokenize(text) {
            self.accumulate(&mut acc, b'u', token.as_bytes());
            let chars: Vec<char> = token.chars().collect();
            if chars.len() >= 3 {
                for window in chars.windows(3) {
                    let tri: String = window.iter().collect();
                    self.accumulate(&mut acc, b't', tri.as_bytes());
                }
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut acc {
                *v /= norm;
            }
        }
        EmbeddingVector::new(acc)
    }

    fn accumulate(&self, acc: &mut [f64], kind: u8, bytes: &[u8]) {
        let h = mix64(fnv1a64(self.hash_seed ^ u64::from(kind), bytes));
        let bucket = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }
}

fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

// splitmix64 finalizer; FNV alone has weak low bits.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
