//! Seeds and reproducible random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] keyed by an
//! [`RngSeed`]. Child streams are obtained with [`RngSeed::derive`], which
//! hashes the parent seed together with a stream index through SplitMix64.
//! Work items (replicates, permutations, bootstrap resamples) each own a
//! derived stream, so results do not depend on how work is scheduled across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A 64-bit seed. Identical seeds produce identical streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    /// Seed of the `stream`-th child stream.
    pub fn derive(self, stream: u64) -> RngSeed {
        let key = splitmix64(self.0);
        RngSeed(splitmix64(key ^ splitmix64(stream.wrapping_mul(GOLDEN_GAMMA) ^ 0xD1B5_4A32_D192_ED03)))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for RngSeed {
    fn from(value: u64) -> Self {
        RngSeed(value)
    }
}
