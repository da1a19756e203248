//! Deterministic random streams.
//!
//! Every stochastic stage draws from its own ChaCha8 stream derived from the
//! run seed and a fixed stream id, so results do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purposes that own a disjoint block of stream ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Source = 1,
    Fiber = 2,
    Detector = 3,
    Analyzer = 4,
    ShotNoise = 5,
    Misc = 6,
}

/// Stream `index` of kind `kind` for `seed`.
pub fn stream(seed: u64, kind: StreamKind, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << 40) | (index & ((1 << 40) - 1)));
    rng
}
