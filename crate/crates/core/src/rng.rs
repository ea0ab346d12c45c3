//! Seeded random streams.
//!
//! Every consumer (a simulated node, a replica, the exchange step) gets its own
//! ChaCha stream keyed by `(seed, tag, index)`, so draws never depend on the order
//! in which consumers are visited or on how work is spread across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags that keep independent streams apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Tag {
    Dynamics = 1,
    Observation = 2,
    Replica = 3,
    Exchange = 4,
    Metronome = 5,
}

pub fn stream(seed: u64, tag: Tag, index: u32) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 32) | index as u64);
    rng
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform draw on `[lo, hi)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
