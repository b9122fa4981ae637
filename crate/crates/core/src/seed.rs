//! Deterministic derivation of independent RNG seeds from a run seed.

/// SplitMix64 finalizer applied to `base` offset by `stream`.
pub fn derive(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const ACTOR: u64 = 1;
pub const CRITIC_1: u64 = 2;
pub const CRITIC_2: u64 = 3;
pub const LEARNER: u64 = 4;
pub const EXPLORE: u64 = 5;
pub const EVAL: u64 = 6;
pub const ENV: u64 = 7;
