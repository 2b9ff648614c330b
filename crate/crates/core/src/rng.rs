//! Deterministic seeding.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] whose seed is a
//! pure function of a master seed, a stream tag and an index, so batch generation is
//! independent of evaluation order and thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags for [`derive_seed`].
pub mod stream {
    pub const CASE1_TRAIN: u64 = 0x11;
    pub const CASE1_TEST: u64 = 0x12;
    pub const MODEL_DATA: u64 = 0x21;
    pub const EMPIRICAL_DATA: u64 = 0x22;
    pub const TEST_DATA: u64 = 0x23;
    pub const GRID_ORACLE: u64 = 0x24;
    pub const TRAINING: u64 = 0x31;
    pub const SOLVER: u64 = 0x41;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `(master, stream, index)` into a well-spread 64-bit seed.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream.rotate_left(17)) ^ index)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
