//! Seeding conventions shared by every stochastic component.
//!
//! All randomness flows from ChaCha8 streams keyed by a 64-bit seed. Derived
//! seeds (one per dataset sample, one per training epoch) are obtained by
//! XOR-ing the base seed with a SplitMix64 hash of the index, so any sample
//! can be regenerated independently of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of item `index` in a stream rooted at `base`.
pub fn derive(base: u64, index: u64) -> u64 {
    base ^ mix64(index)
}
