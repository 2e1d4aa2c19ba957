// SPDX-License-Identifier: MIT

//! Reproducible random substreams.
//!
//! Every stream is a ChaCha8 generator whose 256-bit key is the SHA-256 of
//! the base seed and a list of labels, so streams are platform independent
//! and adding a new consumer never shifts the draws of an existing one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Derives an independent generator from `seed` and `labels`.
pub fn substream(seed: u64, labels: &[&[u8]]) -> SimRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        // length prefix keeps ["ab","c"] and ["a","bc"] apart
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label);
    }
    SimRng::from_seed(hasher.finalize().into())
}

/// Stable 64-bit hash of a list of integers.
pub fn stable_hash(values: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Exponential variate with the given rate, by inverse transform.
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    // u in [0, 1) so 1 - u is in (0, 1] and the log is finite
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let mut a = substream(7, &[b"arrival", b"app1"]);
        let mut b = substream(7, &[b"arrival", b"app1"]);
        let mut c = substream(7, &[b"arrival", b"app2"]);
        let xa: u64 = a.random();
        assert_eq!(xa, b.random::<u64>());
        assert_ne!(xa, c.random::<u64>());
    }

    #[test]
    fn label_boundaries_matter() {
        let mut a = substream(1, &[b"ab", b"c"]);
        let mut b = substream(1, &[b"a", b"bc"]);
        assert_ne!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn stable_hash_is_pinned() {
        // frozen so that seeds in old manifests stay valid
        assert_eq!(stable_hash(&[0, 0]), 15392584411371816759);
        assert_eq!(stable_hash(&[3, 1]), 12990599282712802971);
        assert_ne!(stable_hash(&[0, 1]), stable_hash(&[1, 0]));
    }
}
