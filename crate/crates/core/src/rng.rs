//! Seed derivation. Every stochastic step draws from its own ChaCha stream
//! keyed by (master seed, purpose, node, round), so results do not depend on
//! execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags for derived streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Partition = 2,
    Split = 3,
    Adversary = 4,
    ModelInit = 5,
    Training = 6,
    Poison = 7,
    Mtd = 8,
    FlipLabels = 9,
    TestSubset = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, node: u64, round: u64) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ stream as u64);
    h = splitmix64(h ^ node);
    splitmix64(h ^ round)
}

pub fn stream_rng(master: u64, stream: Stream, node: u64, round: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, stream, node, round))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
