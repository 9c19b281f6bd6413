//! Counter-based seed derivation.
//!
//! A child seed is a pure function of the master seed and a path of
//! integer labels (trial index, role, round, ...), so adding trials or
//! roles never perturbs the seeds of existing ones:
//!
//! ```text
//! h = splitmix64(master)
//! for label in path: h = splitmix64(h ^ splitmix64(label + 0x9E3779B97F4A7C15))
//! ```

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |h, &label| {
        splitmix64(h ^ splitmix64(label.wrapping_add(0x9E37_79B9_7F4A_7C15)))
    })
}

/// Labels for the roles that consume randomness in a trial.
pub mod role {
    pub const PARTITION: u64 = 1;
    pub const TARGET_INIT: u64 = 2;
    pub const TARGET_TRAIN: u64 = 3;
    pub const SHADOW_INIT: u64 = 4;
    pub const SHADOW_TRAIN: u64 = 5;
    pub const FEATURES: u64 = 6;
    pub const DISCRIMINATOR: u64 = 7;
    pub const DATA: u64 = 8;
    pub const BUTTERFLY: u64 = 9;
}
