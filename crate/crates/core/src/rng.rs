//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 stream keyed by the
//! user seed. The 64-bit stream id encodes the purpose and an index, so
//! replications, validation sets and folds never share a stream and the
//! draws do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Name of the generator, recorded in report provenance.
pub const RNG_NAME: &str = "ChaCha20 (rand_chacha 0.9, seed_from_u64, stream = purpose << 56 | index)";

/// Purpose tag occupying the top byte of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Stream {
    Replication = 1,
    Validation = 2,
    Folds = 3,
    Auxiliary = 4,
}

/// Generator for `(seed, purpose, index)`.
pub fn stream_rng(seed: u64, purpose: Stream, index: u64) -> ChaCha20Rng {
    assert!(index < 1 << 56, "stream index {index} overflows 56 bits");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | index);
    rng
}
