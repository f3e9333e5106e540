//! Deterministic random substreams keyed by integer tuples, e.g.
//! `(seed, replication, purpose, draw)`. Each key maps to an independent
//! ChaCha8 stream so results never depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a key path into a single 64-bit stream seed.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k.wrapping_add(0x5851_F42D))))
}

pub fn substream(seed: u64, keys: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, keys))
}

/// Purpose tags used as the first key below a replication index.
pub(crate) mod purpose {
    pub const DATA: u64 = 1;
    pub const TUNE_KAPPA: u64 = 2;
    pub const TUNE_OMEGA: u64 = 3;
    pub const CI: u64 = 4;
    pub const EVAL: u64 = 5;
}
