//! Seed derivation and the random stream used throughout the simulator.
//!
//! Every stochastic choice draws from a [`ChaCha8Rng`] keyed by a 64-bit
//! seed. ChaCha8 is a fixed, documented stream cipher, so a given seed yields
//! the same sequence on every platform. Child seeds are derived with the
//! SplitMix64 finalizer, which lets a replication own independent streams for
//! the hidden types and for the policy without either perturbing the other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tag for sampling the hidden type assignment.
pub const TYPES_STREAM: u64 = 0x7479_7065;
/// Stream tag for the policy's own randomness.
pub const POLICY_STREAM: u64 = 0x706f_6c69;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a parent seed with a child index into a new seed.
///
/// `derive_seed(base, i)` for consecutive `i` are statistically independent
/// and adding more children never changes existing ones.
pub fn derive_seed(parent: u64, child: u64) -> u64 {
    splitmix64(parent ^ splitmix64(child))
}

pub fn stream(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
