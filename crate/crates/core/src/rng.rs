//! Seeded random streams.
//!
//! Every stochastic operation takes a caller-supplied stream. Independent
//! streams (per episode, per worker) are derived from a base seed and a
//! stream index so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `index` of the family rooted at `seed`.
pub fn substream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
