//! Deterministic random streams.
//!
//! Every generator is a ChaCha8 instance seeded by the user seed, with the
//! 64-bit stream id split into an 8-bit purpose tag and a 56-bit replicate
//! index. Distinct `(replicate, purpose)` pairs therefore never share a
//! keystream, and replicates can be run on any number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamPurpose {
    /// Innovations `Z_t` of the simulated models.
    Noise = 1,
    /// Log-volatility shocks of the stochastic volatility model.
    Volatility = 2,
    /// Block starts and lengths of the stationary bootstrap.
    Bootstrap = 3,
    /// Gaussian coefficients of limit-process paths.
    Limit = 4,
}

const REPLICATE_MASK: u64 = (1 << 56) - 1;

pub fn stream_rng(seed: u64, replicate: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    assert!(replicate <= REPLICATE_MASK, "replicate index exceeds 2^56");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | replicate);
    rng
}
