//! Deterministic random streams.
//!
//! Every random consumer draws from a ChaCha8 stream whose 64-bit seed is
//! derived from `(master seed, label, unit id)`: the label is hashed with
//! 64-bit FNV-1a, then seed, label hash and unit are folded through the
//! SplitMix64 finalizer. Streams are therefore independent of thread
//! scheduling and reproducible from the master seed alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream for `(seed, label, unit)`.
pub fn derive_seed(seed: u64, label: &str, unit: u64) -> u64 {
    splitmix(splitmix(seed ^ fnv1a(label.as_bytes())) ^ splitmix(unit))
}

pub fn stream(seed: u64, label: &str, unit: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label, unit))
}

/// Standard normal draw (Box-Muller, cosine branch only).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fisher-Yates shuffle driven by `rng`.
pub fn shuffle<R: Rng + ?Sized, X>(rng: &mut R, items: &mut [X]) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
