//! Seeded randomness.
//!
//! Every stochastic step (initialization, dropout, shuffling, synthesis)
//! draws from a ChaCha stream keyed by a base seed plus a small tuple of
//! stream identifiers, so work can be split or resumed without changing
//! the numbers drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with stream identifiers into a new seed.
pub fn derive_seed(seed: u64, stream: &[u64]) -> u64 {
    stream
        .iter()
        .fold(splitmix(seed), |acc, &s| splitmix(acc ^ splitmix(s)))
}

/// Generator for a derived stream.
pub fn stream(seed: u64, ids: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, ids))
}

/// Standard normal draw.
pub fn gaussian(rng: &mut Rng) -> f64 {
    use rand::Rng as _;
    rng.sample(rand_distr::StandardNormal)
}
