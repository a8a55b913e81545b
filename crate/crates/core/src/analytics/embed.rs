use super::terms::tokenize;
use crate::hash::fnv1a64;

pub const DEFAULT_EMBED_DIM: usize = 256;

/// Maps text to a fixed-length vector.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Bag-of-words feature hashing: each token adds one to bucket
/// `fnv1a64(token) % dim`, then the vector is L2-normalized.
///
/// Text without alphanumeric tokens hashes its trimmed form as a single
/// token; whitespace-only text maps to the zero vector.
pub fn hash_embed(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= 2, "embedding dimension must be at least 2");
    let mut v = vec![0.0; dim];
    let mut any = false;
    for token in tokenize(text) {
        v[(fnv1a64(token.as_bytes()) % dim as u64) as usize] += 1.0;
        any = true;
    }
    let trimmed = text.trim();
    if !any && !trimmed.is_empty() {
        v[(fnv1a64(trimmed.as_bytes()) % dim as u64) as usize] = 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_EMBED_DIM }
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        hash_embed(text, self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn deterministic_unit_vectors() {
        for text in ["piano jazz", "!!!", "silent dream of a priestess", "雨"] {
            let a = hash_embed(text, 64);
            assert_eq!(a, hash_embed(text, 64));
            let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "{text}");
        }
        assert!(hash_embed("   ", 8).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shared_words_mean_higher_similarity() {
        let a = hash_embed("piano jazz", 256);
        let b = hash_embed("piano jazz trio", 256);
        let c = hash_embed("heavy metal", 256);
        assert!(cosine(&a, &b) > cosine(&a, &c));
    }
}
