//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator keyed by an experiment seed and a
//! stream id, so trial `k` draws the same numbers no matter which worker runs
//! it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedLineage {
    pub seed: u64,
    pub stream: u64,
}

impl SeedLineage {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// A derived lineage for a sub-stream, e.g. ghost samples inside a trial.
    pub fn child(&self, tag: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x5851_f42d_4c95_7f2d))),
            stream: tag,
        }
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
