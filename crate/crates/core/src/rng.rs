//! Seed derivation and the random stream type used by every simulation.
//!
//! Seeds are derived with a fixed, platform-independent mixing scheme so that
//! results replicate bit-for-bit:
//!
//! * a scenario name is folded to 64 bits with FNV-1a,
//! * `scenario_seed(master, name) = splitmix64(master ^ fnv1a(name))`,
//! * `replicate_seed(seed, i) = splitmix64(seed ^ splitmix64(i + 1))`.
//!
//! The stream itself is ChaCha8, whose output is specified independently of
//! the host and of the `rand` version.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream handed to every stochastic operation.
pub type SimRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// One round of the SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a over the UTF-8 bytes of `s`.
pub fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn scenario_seed(master: u64, scenario: &str) -> u64 {
    splitmix64(master ^ fnv1a(scenario))
}

pub fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    splitmix64(seed ^ splitmix64(replicate.wrapping_add(1)))
}

/// Derive a sub-stream seed for a named purpose inside a run.
pub fn stream_seed(seed: u64, purpose: &str) -> u64 {
    splitmix64(seed ^ fnv1a(purpose).rotate_left(17))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Stream for replicate `i` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> SimRng {
    rng_from_seed(replicate_seed(seed, replicate))
}
