//! Seed derivation shared by every replicate and draw loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for replicate `index` of `parent`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix64(mix64(parent.wrapping_add(GOLDEN)) ^ index.wrapping_add(1).wrapping_mul(GOLDEN))
}

/// Child seed keyed by a label, for independent streams inside one replicate.
pub fn derive_labeled(parent: u64, label: &str) -> u64 {
    let h = label
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3));
    derive_seed(parent, h)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
