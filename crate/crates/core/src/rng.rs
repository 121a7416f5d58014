//! Counter-based random streams.
//!
//! Every episode draws from its own ChaCha stream, addressed by a key derived
//! from `(seed, purpose, iteration, ...)` and a stream index. Results therefore
//! do not depend on how episodes are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

/// Purpose labels for [`RngStreams::fork`].
pub mod domain {
    pub const COLLECT: u64 = 0x636f_6c6c;
    pub const GORP: u64 = 0x676f_7270;
    pub const EVAL: u64 = 0x6576_616c;
    pub const COMPLIANCE: u64 = 0x636f_6d70;
    pub const GENERATE: u64 = 0x6765_6e65;
}

/// A keyed family of independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStreams {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { key: splitmix64(seed) }
    }

    /// Child family for a sub-purpose. Distinct labels give unrelated keys.
    pub fn fork(&self, label: u64) -> Self {
        Self {
            key: splitmix64(self.key ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }

    pub fn stream(&self, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_stream(index);
        rng
    }
}
