//! Data-condition transforms on token-id streams.
//!
//! These are a cross-implementation contract: the capture tooling reproduces
//! them byte-for-byte, so the only randomness is [`SplitMix64`] seeded
//! directly with the user seed, and the algorithms are spelled out in
//! `docs/conditions.md`.

use crate::error::{Error, Result};
use crate::seed::SplitMix64;

/// Global permutation of the stream: Fisher-Yates under `SplitMix64(seed)`.
/// Unigram frequencies are preserved exactly; order is destroyed.
pub fn shuffle_stream(token_ids: &[u32], seed: u64) -> Vec<u32> {
    let mut out = token_ids.to_vec();
    SplitMix64::new(seed).shuffle(&mut out);
    out
}

/// The permutation `σ` of `[0, vocab_size)`: Fisher-Yates of the identity
/// under `SplitMix64(seed)`; `σ[id]` is the remapped id.
pub fn vocab_permutation(vocab_size: u32, seed: u64) -> Vec<u32> {
    let mut sigma: Vec<u32> = (0..vocab_size).collect();
    SplitMix64::new(seed).shuffle(&mut sigma);
    sigma
}

pub fn inverse_permutation(sigma: &[u32]) -> Vec<u32> {
    let mut inv = vec![0u32; sigma.len()];
    for (i, &s) in sigma.iter().enumerate() {
        inv[s as usize] = i as u32;
    }
    inv
}

fn apply(token_ids: &[u32], map: &[u32]) -> Result<Vec<u32>> {
    token_ids
        .iter()
        .enumerate()
        .map(|(pos, &id)| {
            map.get(id as usize).copied().ok_or_else(|| {
                Error::param(
                    "token_ids",
                    format!(
                        "id {id} at position {pos} is outside vocab of {}",
                        map.len()
                    ),
                )
            })
        })
        .collect()
}

/// `out[i] = σ(in[i])`. Positional structure (which positions hold equal ids)
/// is preserved; the id-to-embedding association is destroyed.
pub fn remap_vocab(token_ids: &[u32], vocab_size: u32, seed: u64) -> Result<Vec<u32>> {
    apply(token_ids, &vocab_permutation(vocab_size, seed))
}

/// Inverse of [`remap_vocab`] for the same `(vocab_size, seed)`.
pub fn unmap_vocab(token_ids: &[u32], vocab_size: u32, seed: u64) -> Result<Vec<u32>> {
    apply(
        token_ids,
        &inverse_permutation(&vocab_permutation(vocab_size, seed)),
    )
}

/// Uniform-random ids: `len` draws of `below(vocab_size)` from
/// `SplitMix64(seed)`.
pub fn mock_stream(len: usize, vocab_size: u32, seed: u64) -> Result<Vec<u32>> {
    if vocab_size == 0 {
        return Err(Error::param("vocab_size", "must be positive"));
    }
    let mut rng = SplitMix64::new(seed);
    Ok((0..len)
        .map(|_| rng.below(u64::from(vocab_size)) as u32)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_keeps_multiset() {
        let mut out = shuffle_stream(&[7, 7, 9], 1);
        out.sort_unstable();
        assert_eq!(out, vec![7, 7, 9]);
        assert_eq!(shuffle_stream(&[], 1), Vec::<u32>::new());
    }

    #[test]
    fn remap_round_trip() {
        let ids = vec![0, 5, 5, 3, 9, 0];
        let m = remap_vocab(&ids, 10, 42).unwrap();
        assert_eq!(unmap_vocab(&m, 10, 42).unwrap(), ids);
        for i in 0..ids.len() {
            for j in 0..ids.len() {
                assert_eq!(ids[i] == ids[j], m[i] == m[j]);
            }
        }
    }

    #[test]
    fn remap_rejects_out_of_range() {
        let err = remap_vocab(&[1, 10], 10, 0).unwrap_err().to_string();
        assert!(err.contains("position 1"), "{err}");
    }

    #[test]
    fn permutation_is_a_bijection() {
        let mut s = vocab_permutation(1000, 3);
        s.sort_unstable();
        assert_eq!(s, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn mock_is_seeded() {
        let a = mock_stream(100, 50, 4).unwrap();
        assert_eq!(a, mock_stream(100, 50, 4).unwrap());
        assert!(a.iter().all(|&x| x < 50));
        assert!(mock_stream(1, 0, 4).is_err());
    }
}
