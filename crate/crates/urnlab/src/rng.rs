//! Counter-based random stream derivation.
//!
//! Every stochastic operation owns a ChaCha12 stream derived from
//! (root seed, counter index, purpose tag). Streams for distinct
//! (index, purpose) pairs are statistically independent, so adding
//! replicas or reordering execution never perturbs existing draws,
//! and regrowing an urn from its seed reproduces it bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Purpose tags keep streams for different roles disjoint even when
/// they share a counter index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Grow = 1,
    UniformBall = 2,
    RecordRep = 3,
    Resample = 4,
    Couple = 5,
    AuxWalk = 6,
    Limit = 7,
    Bernstein = 8,
    Tail = 9,
    Replica = 10,
    MonteCarlo = 11,
}

/// splitmix64 finalizer; full-period bijective mixer on u64.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Collapses (seed, index, purpose) to a single well-mixed u64.
#[inline]
pub fn derive_sub_seed(seed: u64, index: u64, purpose: Purpose) -> u64 {
    mix(mix(mix(seed) ^ index) ^ (purpose as u64))
}

/// Derives an independent ChaCha12 stream for (seed, index, purpose).
/// The 256-bit key is filled from consecutive splitmix64 outputs of the
/// collapsed state, a standard seed-expansion construction.
pub fn derive_stream(seed: u64, index: u64, purpose: Purpose) -> ChaCha12Rng {
    let h = derive_sub_seed(seed, index, purpose);
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&mix(h.wrapping_add(i as u64 + 1)).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
