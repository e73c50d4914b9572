//! Keyed random streams.
//!
//! Every block of random numbers is addressed by a tuple such as
//! `(seed, draw, layer, row)`; the tuple is hashed into an independent
//! generator, so the values never depend on the order (or the thread) in
//! which blocks are produced.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Row index reserved for bias vectors.
pub const BIAS_ROW: u64 = u64::MAX;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a key tuple into a 64-bit stream seed.
pub fn stream_key(parts: &[u64]) -> u64 {
    parts.iter().enumerate().fold(0x6A09_E667_F3BC_C909, |h, (i, &p)| {
        splitmix(h ^ splitmix(p.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN))))
    })
}

/// Generator for the block addressed by `parts`.
pub fn keyed_rng(parts: &[u64]) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(stream_key(parts))
}

/// Fills `out` with standard normals from the block addressed by `parts`.
pub fn fill_standard_normal(parts: &[u64], out: &mut [f64]) {
    let mut rng = keyed_rng(parts);
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}
