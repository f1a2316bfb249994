//! Seeded random streams.
//!
//! All randomness flows from one top-level seed. Each consumer derives its
//! own ChaCha stream from `(seed, purpose tag, indices)` so that draws made
//! for one purpose never shift the draws made for another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derives an independent generator for `(seed, tag, parts)`.
pub fn stream(seed: u64, tag: &str, parts: &[u64]) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Derives a child seed (for handing to components that take a plain `u64`).
pub fn derive_seed(seed: u64, tag: &str, parts: &[u64]) -> u64 {
    stream(seed, tag, parts).random()
}

/// Hashes a string into a `u64` stream index.
pub fn label_index(s: &str) -> u64 {
    let digest = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// A source of standard-normal noise.
pub trait NoiseSource {
    fn fill(&mut self, out: &mut [f64]);

    fn draw(&mut self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        self.fill(&mut v);
        v
    }
}

/// Draws i.i.d. N(0, 1) values from a generator.
pub struct GaussianNoise<R> {
    rng: R,
}

impl<R: Rng> GaussianNoise<R> {
    pub fn new(rng: R) -> Self {
        Self { rng }
    }
}

impl<R: Rng> NoiseSource for GaussianNoise<R> {
    fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.rng.sample(StandardNormal);
        }
    }
}

/// Always yields zeros; turns every reparametrized draw into its mean.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn fill(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}
