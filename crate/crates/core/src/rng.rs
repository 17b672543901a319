//! Seeded random streams.
//!
//! Every stochastic stage of a run draws from its own ChaCha8 stream keyed by
//! `(seed, step, purpose)`. Stages therefore never shift each other's random
//! numbers, and strategies that share a seed see common random numbers at
//! matching stages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name recorded in run manifests.
pub const ALGORITHM: &str = "ChaCha8 (rand_chacha), one stream per (seed, step, purpose)";

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    InitialDesign,
    HyperparameterFit,
    Lipschitz,
    /// In-flight update of the set `i` positions behind the newest result.
    Update(u32),
    Proposal,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::InitialDesign => 0,
            Purpose::HyperparameterFit => 1,
            Purpose::Lipschitz => 2,
            Purpose::Proposal => 3,
            Purpose::Update(i) => 16 + u64::from(i),
        }
    }
}

pub fn stream(seed: u64, step: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((step << 20) | purpose.code());
    rng
}
