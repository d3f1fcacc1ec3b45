//! Deterministic seed derivation.
//!
//! Every stochastic stage of the pipeline owns an explicit `u64` seed, and
//! nested work items (per step, per draw, per grid point) derive child seeds
//! from it. Derivation is a keyed mix rather than sequential RNG draws so the
//! result is independent of evaluation order and safe to use from parallel
//! workers.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mix a seed with a stream of labels into a new independent seed.
///
/// Uses splitmix64 finalization rounds; collisions between distinct label
/// streams are as unlikely as 64-bit hash collisions.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &label in labels {
        state = state.wrapping_add(label).wrapping_add(0x9e37_79b9_7f4a_7c15);
        state = splitmix64(state);
    }
    splitmix64(state)
}

/// A seeded generator for one self-contained unit of work.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
