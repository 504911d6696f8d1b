//! Seeded random streams.
//!
//! Every stochastic stage draws from its own ChaCha stream so that changing
//! how many numbers one stage consumes never shifts another stage's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids for the pipeline stages.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const RBM_INIT: u64 = 3;
    pub const RBM_TRAIN: u64 = 4;
    pub const CLONAL: u64 = 5;
    pub const ORACLE: u64 = 6;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
