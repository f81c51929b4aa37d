//! Seeded, splittable randomness.
//!
//! Every stochastic component takes a `u64` master seed and derives labeled
//! substreams from it, so experiments are reproducible and independent pieces
//! (partition coins, fictitious runs, per-trial runs) never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives an independent generator from `seed` for the given label.
///
/// The label is FNV-1a hashed into the ChaCha stream number, so distinct
/// labels give statistically independent streams of the same master seed.
pub fn derive_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}
