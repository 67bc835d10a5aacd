//! Deterministic RNG substreams.
//!
//! Every random draw in the crate flows from an explicit master seed through
//! [`substream`], which mixes the seed with a domain tag and caller-chosen
//! indices (replan counter, rollout index, agent index, ...) into an
//! independent generator. Two properties follow by construction: identical
//! seeds reproduce identical runs, and results never depend on worker count
//! or scheduling order, because no generator is ever shared between tasks.

use rand::rngs::SmallRng;
use rand::SeedableRng;

/// Domain tags keep substreams from different subsystems disjoint even when
/// their numeric indices collide.
pub mod domain {
    pub const ROLLOUT: u64 = 0x524f4c4c; // "ROLL"
    pub const PLANT: u64 = 0x504c4e54; // "PLNT"
    pub const WIND: u64 = 0x57494e44; // "WIND"
    pub const INIT: u64 = 0x494e4954; // "INIT"
}

/// SplitMix64 finalizer; full-period avalanche over u64.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the 64-bit key for a substream from a master seed and index path.
pub fn derive_key(master: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    state
}

/// Independent generator for `(master, tags...)`.
pub fn substream(master: u64, tags: &[u64]) -> SmallRng {
    SmallRng::seed_from_u64(derive_key(master, tags))
}
