//! Labeled sub-seed derivation.
//!
//! Every random stream is derived from one root seed plus a label and a list of
//! indices, so results never depend on the order in which work items run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from `root`, a label and indices. Stable across platforms
/// and releases.
pub fn derive(root: u64, label: &str, indices: &[u64]) -> u64 {
    // FNV-1a over the label, then splitmix-chained with the indices.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    let mut s = splitmix(root ^ splitmix(h));
    for &i in indices {
        s = splitmix(s ^ i.wrapping_mul(GOLDEN));
    }
    s
}

/// Deterministic RNG for a labeled stream.
pub fn rng(root: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, label, indices))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_and_indices_separate_streams() {
        let a = derive(42, "route", &[0]);
        assert_eq!(a, derive(42, "route", &[0]));
        assert_ne!(a, derive(42, "route", &[1]));
        assert_ne!(a, derive(42, "drift", &[0]));
        assert_ne!(a, derive(43, "route", &[0]));
        assert_ne!(derive(1, "x", &[0, 1]), derive(1, "x", &[1, 0]));
    }
}

/// SplitMix64 stream with Lemire's unbiased bounded draw.
///
/// Used where another implementation must reproduce our output bit-exactly
/// (the data-condition transforms). The algorithm is fixed:
///
/// ```text
/// state += 0x9E3779B97F4A7C15
/// z = state
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// return z ^ (z >> 31)
/// ```
///
/// `below(n)`: draw `x`, `m = x * n` as 128-bit; reject while
/// `low64(m) < (2^64 - n) mod n`; return `high64(m)`.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// In-place Fisher-Yates: for `i` from `len-1` down to 1, swap `i` with
    /// `below(i + 1)`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
