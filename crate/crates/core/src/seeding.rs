//! Counter-based deterministic RNG derivation.
//!
//! Every random quantity in the crate is a pure function of a `(seed, tag, k)`
//! triple, so samples are random-access: replay is bit-identical and parallel
//! sweeps never share generator state.

use rand_chacha::ChaCha8Rng;

/// Stream tag for the A-matrix oracle (and the default single stream).
pub const TAG_STREAM_A: u64 = 0;
/// Stream tag for the B-matrix oracle.
pub const TAG_STREAM_B: u64 = 1;
/// Stream tag for solver initialization.
pub const TAG_INIT: u64 = 2;
/// Stream tag for saddle perturbations.
pub const TAG_PERTURB: u64 = 3;
/// Stream tag for problem generation (random orthogonal factors).
pub const TAG_PROBLEM: u64 = 4;

/// splitmix64 step; used to fold tags into seeds.
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for the `(seed, tag, k)` triple.
pub fn rng(seed: u64, tag: u64, k: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    key[16..24].copy_from_slice(&k.to_le_bytes());
    key[24..32].copy_from_slice(b"sgha-rng");
    use rand::SeedableRng;
    ChaCha8Rng::from_seed(key)
}
