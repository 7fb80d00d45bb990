//! Reproducible random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream selected by a
//! `(seed, stream)` pair, so results never depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// The generator for `stream` under `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive an independent seed for a named purpose (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut z = seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags for [`derive_seed`].
pub mod purpose {
    pub const NULL_REPLICATES: u64 = 1;
    pub const PROJECTION_DIRECTIONS: u64 = 2;
    pub const PROJECTION_CALIBRATION: u64 = 3;
    pub const MIXTURE_DRAWS: u64 = 4;
    pub const STUDY_DATA: u64 = 5;
}
