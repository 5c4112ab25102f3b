//! Seeded random sources.
//!
//! Everything random in the toolkit is drawn from ChaCha8 streams whose seeds
//! are derived by hashing a global seed together with stable identifiers, so
//! results do not depend on iteration order, thread scheduling or platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SeededRng = ChaCha8Rng;

/// Stream seeded directly from a 64-bit seed.
pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream seeded from `seed` and a sequence of labelled byte strings.
///
/// Parts are length-prefixed, so `["ab", "c"]` and `["a", "bc"]` give
/// different streams.
pub fn derive(seed: u64, parts: &[&[u8]]) -> SeededRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

/// Per-example stream: `hash(seed, dialogue id, turn index)`.
pub fn example_rng(seed: u64, dialogue_id: &str, turn_index: usize) -> SeededRng {
    derive(
        seed,
        &[
            b"example",
            dialogue_id.as_bytes(),
            &(turn_index as u64).to_le_bytes(),
        ],
    )
}

/// Hex SHA-256 of newline-joined items; used for corpus fingerprints.
pub fn fingerprint<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for item in items {
        hasher.update(item.as_bytes());
        hasher.update(b"\n");
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
