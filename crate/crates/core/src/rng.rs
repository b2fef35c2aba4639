//! Counter-based seed derivation so per-item random streams do not depend on
//! thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for item `index` of stream `tag` under `seed`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index)
}

pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}

pub(crate) mod tags {
    pub const GEOMETRY: u64 = 1;
    pub const MIXING: u64 = 2;
    pub const PIXEL_NOISE: u64 = 3;
    pub const NOISE_STEPS: u64 = 4;
    pub const CLOUD: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const SHUFFLE: u64 = 7;
}
