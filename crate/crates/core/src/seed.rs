//! Stable seed derivation.
//!
//! Every random stream in the crate is keyed by a master seed plus a short
//! path of tags (bucket id, repetition, instance index, ...). The mixing is
//! splitmix64, which is fixed across platforms and toolchains, unlike
//! `std::hash`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and an ordered list of tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t)))
}

pub fn rng_from(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Domain tags so that streams used for different purposes never coincide.
pub(crate) mod tag {
    pub const BANK: u64 = 1;
    pub const OBSERVE: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const INIT_CLASSIFIER: u64 = 4;
    pub const INIT_GENERATOR: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const NOISE: u64 = 7;
    pub const DELTA: u64 = 8;
    pub const GF_MC: u64 = 9;
    pub const GL_MC: u64 = 10;
    pub const BUCKET: u64 = 11;
    pub const REPETITION: u64 = 12;
    pub const KMEANS: u64 = 13;
    pub const INFER: u64 = 14;
    pub const RANDOM_U: u64 = 15;
    pub const ANALYSIS: u64 = 16;
    pub const CALIBRATE: u64 = 17;
    pub const REVEAL: u64 = 18;
}
