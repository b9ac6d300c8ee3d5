//! Stream splitting for reproducible randomness.
//!
//! Every random decision in the pipeline draws from a generator seeded by
//! `(root seed, stream tag, index)`, so results never depend on worker count
//! or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ splitmix64(stream)) ^ index)
}

pub fn stream_rng(root: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, stream, index))
}

pub mod streams {
    pub const COMPOSE: u64 = 1;
    pub const PARAMS: u64 = 2;
    pub const BATCH_ORDER: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const AUDIT: u64 = 5;
    pub const SAMPLE: u64 = 6;
}
