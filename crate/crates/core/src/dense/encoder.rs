use std::hash::Hasher;

use super::Embedding;
use crate::scalar::Scalar;
use crate::sparse::Tokenizer;

pub const DEFAULT_DIM: usize = 1024;

/// Text to fixed-dimension vector.
pub trait Encoder<S>: Send + Sync {
    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Embedding<S>;
}

/// Feature-hashed bag of words: each token adds ±1 to one of `dim` buckets
/// (bucket and sign both from a 64-bit FNV-1a hash), then the sum is
/// L2-normalized. Text without tokens encodes to the zero vector.
#[derive(Debug, Clone)]
pub struct HashedBowEncoder {
    dim: usize,
    tokenizer: Tokenizer,
}

impl HashedBowEncoder {
    pub fn new(dim: usize, tokenizer: Tokenizer) -> Self {
        assert!(dim > 0, "encoder dimension must be positive");
        Self { dim, tokenizer }
    }
}

impl Default for HashedBowEncoder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM, Tokenizer::default())
    }
}

impl<S: Scalar> Encoder<S> for HashedBowEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Embedding<S> {
        let mut acc = vec![0i64; self.dim];
        let tokens = self.tokenizer.tokenize(text);
        if tokens.is_empty() {
            tracing::warn!(text, "nothing to encode, using the zero vector");
            return Embedding::zeros(self.dim);
        }
        for t in &tokens {
            let mut h = fnv::FnvHasher::default();
            h.write(t.as_bytes());
            let h = h.finish();
            let bucket = (h % self.dim as u64) as usize;
            acc[bucket] += if h >> 63 == 0 { 1 } else { -1 };
        }
        let norm = acc.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
        if norm == 0.0 {
            // every token cancelled out
            return Embedding::zeros(self.dim);
        }
        let values = acc.iter().map(|&c| S::of(c as f64 / norm)).collect();
        Embedding::new(values).expect("finite by construction")
    }
}
