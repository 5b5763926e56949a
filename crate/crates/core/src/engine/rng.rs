//! Seeded random streams.
//!
//! Every stochastic operation draws from a ChaCha8 stream identified by a
//! 64-bit seed and a stream number, so results do not depend on platform or
//! on how many other draws happened elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
