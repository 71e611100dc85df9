//! Seeded random streams.
//!
//! Every chain owns a ChaCha8 generator keyed by the run's master seed and
//! positioned on stream `chain_index`. Streams are independent counters over
//! the same key, so chain `i` draws the same numbers regardless of how many
//! chains run or in which order they are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// Stream reserved for run-level draws that are not tied to a chain
/// (oracle samples, synthetic ground truth).
pub const AUX_STREAM: u64 = u64::MAX;

pub fn chain_rng(master_seed: u64, chain_index: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(chain_index);
    rng
}

/// Seeded generator for an auxiliary purpose, offset from the chain streams.
pub fn aux_rng(master_seed: u64, purpose: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(AUX_STREAM - purpose);
    rng
}
