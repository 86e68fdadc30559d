//! Reproducible random streams.
//!
//! Every random draw in the crate flows from a single `u64` master seed.
//! Sub-computations get their own ChaCha stream: the 64-bit stream id of the
//! ChaCha block counter is set from a label, so streams are independent and
//! can be generated in any order (or in parallel) without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids reserved for the pipeline stages.
pub mod streams {
    /// Frequency block `l` of a feature bank uses `FREQUENCIES + l`.
    pub const FREQUENCIES: u64 = 0;
    pub const MIXTURE_FREQUENCIES: u64 = 1 << 32;
    pub const PAIRING: u64 = 2 << 32;
    pub const FOLDS: u64 = 3 << 32;
    pub const TRAINING: u64 = 4 << 32;
    pub const SPLIT: u64 = 5 << 32;
    pub const SYNTHETIC: u64 = 6 << 32;
    pub const PAIRS: u64 = 7 << 32;
}

/// Returns the generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and a label (splitmix64 finalizer).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
