//! Deterministic RNG substreams.
//!
//! Every random quantity in a run is drawn from a ChaCha8 stream selected by
//! hashing the master seed together with a purpose tag and the task indices.
//! Parallel tasks therefore never share a generator, and the value a task
//! sees does not depend on which worker runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags keep substreams of different stages apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    FactorSearch = 1,
    OuterRealization = 2,
    MonteCarloBlock = 3,
    Validation = 4,
    Test = 5,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Key derived from a purpose tag and an index path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(stream: Stream) -> Self {
        StreamKey(splitmix64(stream as u64))
    }

    pub fn with(self, index: u64) -> Self {
        StreamKey(splitmix64(self.0 ^ splitmix64(index)))
    }

    pub fn rng(self, seed: u64) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self.0);
        rng
    }
}

/// Generator for `(seed, stream, indices...)`.
pub fn substream(seed: u64, stream: Stream, indices: &[u64]) -> SimRng {
    indices
        .iter()
        .fold(StreamKey::new(stream), |k, &i| k.with(i))
        .rng(seed)
}
