//! Deterministic RNG streams.
//!
//! Every random draw in the simulator comes from a ChaCha8 stream selected by
//! `(seed, domain, index)`, so blocks can be generated in any order and still
//! reproduce the same values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Named purposes, each mapped to its own key so streams never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Pattern = 1,
    Acquisition = 2,
    Channel = 3,
    Detector = 4,
    Calibration = 5,
    Misc = 6,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> SimRng {
    // splitmix64 finalizer to spread (seed, domain) over the key space
    let mut z = seed ^ (domain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(z);
    rng.set_stream(index);
    rng
}
