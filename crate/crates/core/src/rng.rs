//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a value derived here, so results never depend on ambient state
//! or on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Golden-ratio increment of SplitMix64.
pub const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

pub type Rng = ChaCha8Rng;

/// One SplitMix64 output step applied to `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the bytes of `label`.
pub fn fnv1a64(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Child seed for a labelled sub-stream: `splitmix64(global ^ splitmix64(fnv1a64(label)))`.
///
/// Per-architecture seeds use the canonical architecture ID as the label.
pub fn derive_seed(global: u64, label: &str) -> u64 {
    splitmix64(global ^ splitmix64(fnv1a64(label)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(global: u64, label: &str) -> Rng {
    rng(derive_seed(global, label))
}
