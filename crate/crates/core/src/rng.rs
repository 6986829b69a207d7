//! Seeded generators keyed by `(master_seed, stream)`.
//!
//! ChaCha is counter based: the stream id selects an independent keystream, so
//! trial `i` draws the same numbers no matter which thread runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}
