//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 keyed by the run seed. Each subsystem
//! owns a 64-bit stream id `(subsystem << 40) | index`, where `index`
//! distinguishes shards, sweep points or replications. Two draws in different
//! subsystems never share keystream, so adding a consumer to one subsystem
//! does not perturb the others.
//!
//! Continuous variates are produced by inverse transform from
//! [`uniform01`] so that they are reproducible from this description alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Subsystem {
    ZoneSampling = 1,
    Mobility = 2,
    Traffic = 3,
    Drops = 4,
    Placement = 5,
    Latency = 6,
    Faults = 7,
    Crossings = 8,
}

pub fn stream(seed: u64, subsystem: Subsystem, index: u64) -> SimRng {
    debug_assert!(index < (1 << 40));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((subsystem as u64) << 40) | index);
    rng
}

/// Uniform on `[0, 1)` with 53 bits of precision.
#[inline]
pub fn uniform01(rng: &mut SimRng) -> f64 {
    (rng.gen::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn uniform(rng: &mut SimRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform01(rng)
}

/// Exponential variate with the given mean.
#[inline]
pub fn exponential(rng: &mut SimRng, mean: f64) -> f64 {
    -mean * (1.0 - uniform01(rng)).ln()
}

/// Standard normal variate (Box-Muller, one output per call).
pub fn standard_normal(rng: &mut SimRng) -> f64 {
    let u1 = 1.0 - uniform01(rng);
    let u2 = uniform01(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
