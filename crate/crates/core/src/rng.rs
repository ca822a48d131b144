//! Labelled, seed-derived random streams.
//!
//! Every stochastic component draws from its own stream. A child stream's key
//! is `SHA-256(parent key || label)`, so streams depend only on the root seed
//! and the label path, never on how many numbers a sibling consumed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    path: String,
    key: [u8; 32],
    rng: ChaCha12Rng,
}

impl RngStream {
    /// Root stream for a run.
    pub fn root(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"manetsim-root");
        h.update(seed.to_le_bytes());
        Self::from_key(seed, String::new(), h.finalize().into())
    }

    fn from_key(seed: u64, path: String, key: [u8; 32]) -> Self {
        RngStream {
            seed,
            path,
            key,
            rng: ChaCha12Rng::from_seed(key),
        }
    }

    /// Derives an independent child stream. Panics on an empty label.
    pub fn fork(&self, label: &str) -> RngStream {
        assert!(!label.is_empty(), "stream label must be non-empty");
        let mut h = Sha256::new();
        h.update(self.key);
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        let path = if self.path.is_empty() {
            label.to_string()
        } else {
            format!("{}/{}", self.path, label)
        };
        Self::from_key(self.seed, path, h.finalize().into())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Slash-joined label path from the root.
    pub fn label(&self) -> &str {
        &self.path
    }
}

/// Free-function form of [`RngStream::fork`].
pub fn fork_stream(root: &RngStream, label: &str) -> RngStream {
    root.fork(label)
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(mut s: RngStream, n: usize) -> Vec<u64> {
        (0..n).map(|_| s.next_u64()).collect()
    }

    #[test]
    fn same_seed_and_label_replays() {
        let a = fork_stream(&RngStream::root(42), "mobility");
        let b = fork_stream(&RngStream::root(42), "mobility");
        assert_eq!(draws(a, 10_000), draws(b, 10_000));
    }

    #[test]
    fn labels_separate_streams() {
        let root = RngStream::root(42);
        let a = draws(root.fork("mobility"), 10_000);
        let b = draws(root.fork("traffic"), 10_000);
        assert_ne!(a, b);
        // Not just shifted copies of each other either.
        let shared = a.iter().filter(|x| b.contains(x)).count();
        assert_eq!(shared, 0);
    }

    #[test]
    fn seeds_separate_streams() {
        let a = draws(RngStream::root(1).fork("mobility"), 10_000);
        let b = draws(RngStream::root(2).fork("mobility"), 10_000);
        assert_ne!(a, b);
    }

    #[test]
    fn fork_ignores_parent_consumption() {
        let root = RngStream::root(7);
        let mut used = root.clone();
        let _: f64 = used.random();
        assert_eq!(draws(root.fork("x"), 16), draws(used.fork("x"), 16));
    }

    #[test]
    fn label_path_is_tracked() {
        let s = RngStream::root(3).fork("mobility").fork("node-4");
        assert_eq!(s.label(), "mobility/node-4");
        assert_eq!(s.seed(), 3);
    }

    #[test]
    fn known_first_draw_is_stable() {
        // Frozen to catch accidental changes to the derivation scheme.
        let first = RngStream::root(42).fork("mobility").next_u64();
        assert_eq!(first, 0xa4e0_5ecf_a82d_e0c6);
    }

    #[test]
    #[should_panic]
    fn empty_label_panics() {
        RngStream::root(1).fork("");
    }
}
