//! Seeded random substreams.
//!
//! Every stochastic unit of work (a bootstrap replicate, a simulation
//! replicate) draws from its own ChaCha8 stream keyed by the base seed and a
//! 64-bit stream id, so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for replicate `r` of cell `cell`.
pub fn cell_stream(cell: usize, r: usize) -> u64 {
    ((cell as u64) << 32) | (r as u64 & 0xFFFF_FFFF)
}
