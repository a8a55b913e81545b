use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot sample {requested} items from {available}")]
pub struct SampleError {
    pub requested: usize,
    pub available: usize,
}

/// Draws `n` distinct items uniformly at random; deterministic for a seed.
pub fn sample_without_replacement<T: Clone>(items: &[T], n: usize, seed: u64) -> Result<Vec<T>, SampleError> {
    if n > items.len() {
        return Err(SampleError {
            requested: n,
            available: items.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, items.len(), n)
        .into_iter()
        .map(|i| items[i].clone())
        .collect())
}
