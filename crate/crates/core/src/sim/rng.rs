//! Per-flow random streams.
//!
//! ChaCha8 is a counter-based generator with 2^64 independent streams per
//! key. The run seed is expanded into the key and the flow index selects
//! the stream, so flows draw from non-overlapping sequences and adding a
//! flow never perturbs the draws of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn flow_stream(seed: u64, flow_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(flow_id);
    rng
}
