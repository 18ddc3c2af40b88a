//! Seed derivation for reproducible, order-independent replications.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed and a stream index into an independent seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(stream.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Generator for stream `stream` of `master`.
pub fn stream_rng(master: u64, stream: u64) -> SimRng {
    rng_from_seed(derive_seed(master, stream))
}

/// Stream indices reserved for per-experiment draws that are not tied to a
/// single replication.
pub mod streams {
    pub const NOISE_SCHEDULE: u64 = u64::MAX;
    pub const RELIABILITY_BASE: u64 = 1 << 48;
}
