//! Reproducible random streams.
//!
//! All randomness comes from ChaCha8, a counter-based generator. A run is keyed by
//! one `u64` seed; independent streams (one per budget, one per bootstrap
//! replication, ...) are selected with ChaCha's 64-bit stream id, so the draws of
//! stream `s` do not depend on how many other streams exist or on which thread
//! consumes them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids are namespaced by purpose in the top 16 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Bootstrap = 1,
    Simulate = 2,
    Resample = 3,
    Misc = 4,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}
