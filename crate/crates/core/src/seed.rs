//! Seed derivation and random streams.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` (a counter-based
//! stream cipher generator) seeded with a 64-bit value. Sub-seeds for
//! independent tasks (grid points, folds, trees, permutation rows) are derived
//! by hashing the parent seed together with a canonical task tag:
//!
//! ```text
//! sub_seed = first 8 bytes (little endian) of SHA-256( parent_le_bytes || 0x1f || tag_utf8 )
//! ```
//!
//! Standard normal variates use the Ziggurat method of `rand_distr::StandardNormal`.
//! Because every task owns its stream, results do not depend on the order or
//! the number of threads that execute the tasks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives an independent sub-seed from `parent` and a task tag.
pub fn derive_seed(parent: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Random stream for a seed.
pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Canonical text form of a float coordinate used inside seed tags.
pub fn coord_tag(value: f64) -> String {
    format!("{value:?}")
}
