//! Seeded random streams.
//!
//! Every random draw in the crate goes through a [`ChaCha8Rng`]. A run is
//! driven by one 64-bit master seed; independent consumers (parallel chains,
//! minimizer restarts, oracle checks) take the same seed with a distinct
//! ChaCha stream index, so their sequences never overlap and do not depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream 0 of `seed`.
pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for stream `index` of `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
