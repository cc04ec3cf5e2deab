//! Shared fixtures for the benchmarks.

use densindex::data::{generate_synthetic, Scenario, SyntheticMarket};
use densindex::{Component, GaussianMixture};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random mixture with `k` components in a plausible log-price range.
pub fn random_mixture(k: usize, seed: u64) -> GaussianMixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let comps = raw
        .iter()
        .map(|w| Component::new(w / total, rng.random_range(12.5..13.5), rng.random_range(0.01..0.1)))
        .collect();
    GaussianMixture::new(comps).expect("valid mixture")
}

pub fn tiny_market(seed: u64) -> SyntheticMarket {
    generate_synthetic(&Scenario::Tiny.config(), seed).expect("tiny scenario")
}
