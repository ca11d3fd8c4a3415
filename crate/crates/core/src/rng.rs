//! Hierarchical, splittable random streams.
//!
//! A stream is the pair `(seed, stream_id)`. The seed keys a ChaCha8
//! generator and the stream id selects one of its 2^64 independent
//! keystreams. Children are derived with [`RngStream::split`], which mixes
//! the parent id with a child index, so the tree
//! experiment → seed run → episode → candidate is reproducible from the
//! master seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Root stream for a master seed.
    pub fn root(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// Child stream number `index`. Distinct indices give distinct ids.
    pub fn split(&self, index: u64) -> Self {
        let id = mix64(self.stream_id ^ mix64(index.wrapping_add(0xA076_1D64_78BD_642F)));
        Self::new(self.seed, id)
    }

    /// Child derived from a string label, for named sub-streams
    /// ("init", "train", "plan", ...).
    pub fn split_named(&self, label: &str) -> Self {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.split(h)
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}
