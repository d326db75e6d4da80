//! Deterministic random substreams.
//!
//! Every random quantity in a run (mask noise, rate-coded spikes, batch order,
//! initialization) is drawn from a ChaCha8 stream keyed by the master seed, a
//! purpose tag and a tuple of indices. Streams therefore do not depend on
//! evaluation order, which keeps parallel and sequential execution identical
//! and makes a run resumable from its step counters alone.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
pub use rand_chacha::ChaCha8Rng;

/// Purpose tag mixed into substream keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Logits = 2,
    MaskNoise = 3,
    Encode = 4,
    Shuffle = 5,
    Eval = 6,
    Dataset = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent generator for `(seed, purpose, indices...)`.
pub fn substream(seed: u64, purpose: Stream, indices: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed ^ (purpose as u64).rotate_left(56));
    for &i in indices {
        h = splitmix64(h ^ i);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Uniform draw on the open interval (0, 1).
pub fn uniform_open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

/// Standard Gumbel noise `-ln(-ln(eps))`, `eps ~ U(0, 1)`.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let eps = uniform_open01(rng);
    -libm::log(-libm::log(eps))
}

pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    // p = 1 must always fire and p = 0 never.
    rng.random::<f64>() < p
}

/// Uniform draw on `[lo, hi)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> alloc::vec::Vec<usize> {
    let mut idx: alloc::vec::Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
