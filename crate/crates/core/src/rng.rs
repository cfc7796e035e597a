//! Seeded randomness. Every stochastic step draws from a ChaCha stream keyed
//! by the run seed and a stream label, so stages never share RNG state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// RNG for `(seed, stream)`. Distinct stream labels give independent streams.
pub fn stream(seed: u64, label: &str) -> Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Same as [`stream`] with an extra integer index (epoch, fold, ...).
pub fn substream(seed: u64, label: &str, index: u64) -> Rng {
    stream(seed, &format!("{label}/{index}"))
}
