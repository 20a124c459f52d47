//! Seeded random streams.
//!
//! A run seed fans out into independent ChaCha streams, one per phase, so that
//! consuming more draws in one phase (say, acquisition) never shifts the noise
//! seen by another (say, rollouts).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init = 1,
    Collection = 2,
    Evaluation = 3,
    Acquisition = 4,
    Hypers = 5,
}

/// Stream for one phase of one seed.
pub fn phase_stream(seed: u64, phase: Phase) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(phase as u64);
    rng
}

/// Stream derived from a single 64-bit key; used to freeze rollout noise
/// inside one return evaluation.
pub fn keyed_stream(key: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(key)
}

#[derive(Debug, Clone)]
pub struct Streams {
    pub init: Rng,
    pub collection: Rng,
    pub evaluation: Rng,
    pub acquisition: Rng,
    pub hypers: Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            init: phase_stream(seed, Phase::Init),
            collection: phase_stream(seed, Phase::Collection),
            evaluation: phase_stream(seed, Phase::Evaluation),
            acquisition: phase_stream(seed, Phase::Acquisition),
            hypers: phase_stream(seed, Phase::Hypers),
        }
    }
}
