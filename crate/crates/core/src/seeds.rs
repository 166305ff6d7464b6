//! Deterministic seed derivation.
//!
//! Every random stream in a run is derived from the scenario master seed
//! through these mixers, so that a run is reproducible from its scenario
//! alone and independent streams never share state.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a seed with a sequence of stream labels.
pub fn derive(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(mix64(seed), |acc, &l| mix64(acc ^ mix64(l.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// Maps a hash to a uniform real in [0, 1).
pub fn unit_uniform(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub mod stream {
    //! Labels separating the independent random streams of a run.
    pub const SAMPLING: u64 = 1;
    pub const INSTANCE_ORDER: u64 = 2;
    pub const EVAL_SEED: u64 = 3;
    pub const SELECTION: u64 = 4;
    pub const VALIDATION: u64 = 5;
    pub const TSP_COORDS: u64 = 6;
    pub const SYNTHETIC_TARGET: u64 = 7;
    pub const SYNTHETIC_NOISE: u64 = 8;
}
