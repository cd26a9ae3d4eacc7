//! Reproducible random streams.
//!
//! Every stream in the toolkit is identified by a master seed plus a short
//! path of integer labels (replica index, site, event kind, ...). The path is
//! folded into a 128-bit state, two SplitMix64 finalizer rounds per label,
//! and the final 64-bit digest seeds a `Xoshiro256PlusPlus` generator
//! (expanded to 256 bits by SplitMix64 inside `seed_from_u64`).
//!
//! The derivation depends only on the labels, never on scheduling, so a
//! replica produces the same numbers whichever worker runs it.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed from a master seed and a label path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut hi = mix64(master);
    let mut lo = mix64(master ^ GOLDEN);
    for (depth, &label) in path.iter().enumerate() {
        let salt = (depth as u64 + 1).wrapping_mul(GOLDEN);
        hi = mix64(hi ^ mix64(label.wrapping_add(salt)));
        lo = mix64(lo.wrapping_add(hi) ^ label.rotate_left(17));
    }
    mix64(hi ^ lo.rotate_left(32))
}

pub fn stream(master: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, path))
}

/// Encode a signed lattice coordinate as a stream label.
#[inline]
pub fn site_label(site: i64) -> u64 {
    site as u64
}
