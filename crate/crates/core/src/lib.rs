//! Gradient-penalty regularization, constructive Barron approximation and an
//! experiment harness for both.
//!
//! Training uses the analytic passes on [`nets::Model`]; the scalar tape in
//! [`autodiff`] records the same computations and is the reference the
//! analytic gradients are checked against.

pub mod attacks;
pub mod autodiff;
pub mod barron;
pub mod error;
pub mod harness;
pub mod losses;
pub mod nets;
pub mod par;
pub mod quadrature;
pub mod stats;
pub mod trainer;
pub mod variational;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate-wide RNG: ChaCha8 seeded from a `u64`.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from `(seed, salt)` (splitmix64 finalizer).
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
