//! Deterministic random streams keyed by seed, replicate and role.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers for the independent draws inside one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Covariates = 1,
    Process = 2,
    Noise = 3,
    Packing = 4,
    Auxiliary = 5,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for replicate `rep` at sample size `n` under a master seed.
pub fn replicate_seed(master: u64, n: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ n) ^ rep)
}

/// A ChaCha stream for one role of one seed.
pub fn stream(seed: u64, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role as u64);
    rng
}
