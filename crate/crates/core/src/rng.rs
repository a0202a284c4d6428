use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams derived from one run seed.
///
/// Every stage that consumes randomness draws from its own ChaCha stream, so
/// changing the number of draws in one stage never perturbs another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Generator = 1,
    Siting = 2,
    Hqm = 3,
    Ga = 4,
    Fuzz = 5,
    /// Initial population, shared by the population-based solvers so that
    /// paired runs start from the same states.
    Population = 6,
}

pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Sub-stream for restart `index` of a stage, e.g. one k-means restart.
pub fn substream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream as u64);
    rng
}
