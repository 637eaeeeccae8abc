//! Deterministic derivation of child seeds from a master seed.
//!
//! Child `i` receives `splitmix64(master + (i + 1) · γ)` with `γ` the
//! splitmix increment, i.e. the `(i + 1)`-th output of a splitmix64 stream
//! started at `master`. Trials and bootstrap replicates draw from
//! independent ChaCha8 streams seeded this way, so results never depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// ChaCha8 generator for child `index` under `master`.
pub fn child_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index))
}
