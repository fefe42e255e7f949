//! Seeded random streams.
//!
//! Every stochastic routine draws from ChaCha8 seeded with the user seed.
//! Independent consumers (edge couplings, node fields, solver replicas,
//! noise draws) use distinct ChaCha *stream ids* of the same key, so the
//! bytes each consumer sees depend only on `(seed, stream)` and never on
//! how many values another consumer pulled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream used for coupling draws in lexicographic edge order.
pub const STREAM_COUPLINGS: u64 = 0;
/// Stream used for field draws in node order.
pub const STREAM_FIELDS: u64 = 1;
/// First stream handed to solver replicas; replica `r` uses `STREAM_REPLICA_BASE + r`.
pub const STREAM_REPLICA_BASE: u64 = 1 << 32;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn replica_stream(seed: u64, replica: usize) -> StreamRng {
    stream(seed, STREAM_REPLICA_BASE + replica as u64)
}
