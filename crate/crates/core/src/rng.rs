//! Named random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream whose seed is
//! derived from one top-level seed, a purpose string and a list of integer
//! ids. Changing how much randomness one stage consumes never shifts another
//! stage's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derives a 64-bit stream seed from `(root, purpose, ids)`.
pub fn derive_seed(root: u64, purpose: &str, ids: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    for id in ids {
        hasher.update(id.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(root: u64, purpose: &str, ids: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, purpose, ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_stable_and_separated() {
        let a: u64 = stream(7, "world", &[1]).random();
        let b: u64 = stream(7, "world", &[1]).random();
        let c: u64 = stream(7, "world", &[2]).random();
        let d: u64 = stream(7, "noise", &[1]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn purpose_and_ids_do_not_alias() {
        // "ab" + [] must differ from "a" + ["b" as id]
        assert_ne!(derive_seed(1, "ab", &[]), derive_seed(1, "a", &[b'b' as u64]));
    }
}
