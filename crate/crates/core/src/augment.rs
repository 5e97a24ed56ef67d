//! Token-space augmentations for alignment training: repeat collapse, token
//! insertion and equal-length segment swaps. Evaluation never calls these.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{derive_seed, rng_from};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertPolicy {
    /// Copy the token on either side of the gap.
    #[default]
    Neighbor,
    /// Draw uniformly from `1..=K`.
    Uniform,
}

fn d_collapse() -> f64 {
    0.3
}
fn d_insert() -> f64 {
    0.1
}
fn d_swap() -> f64 {
    0.2
}
fn d_swap_len() -> usize {
    3
}
fn d_copies() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "d_collapse")]
    pub p_collapse: f64,
    #[serde(default = "d_insert")]
    pub p_insert: f64,
    #[serde(default = "d_swap")]
    pub p_swap: f64,
    #[serde(default = "d_swap_len")]
    pub max_swap_len: usize,
    #[serde(default)]
    pub insert_policy: InsertPolicy,
    /// Augmented copies added per training pair.
    #[serde(default = "d_copies")]
    pub copies: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl AugmentConfig {
    pub fn check(&self) -> Result<(), AugmentError> {
        for (name, p) in [("p_collapse", self.p_collapse), ("p_insert", self.p_insert), ("p_swap", self.p_swap)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AugmentError::InvalidConfig(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.max_swap_len == 0 {
            return Err(AugmentError::InvalidConfig("max_swap_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Shortens each run of equal tokens to length 1 with probability `p`.
pub fn collapse_repeats(tokens: &[u32], p: f64, seed: u64) -> Vec<u32> {
    let mut rng = rng_from(seed);
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let mut j = i + 1;
        while j < tokens.len() && tokens[j] == tokens[i] {
            j += 1;
        }
        if j - i > 1 && rng.random_bool(p) {
            out.push(tokens[i]);
        } else {
            out.extend_from_slice(&tokens[i..j]);
        }
        i = j;
    }
    out
}

/// Result of [`insert_tokens`]; `uniform_fallback` is set when the neighbor
/// policy had no neighbors to copy.
#[derive(Debug, Clone, PartialEq)]
pub struct Inserted {
    pub tokens: Vec<u32>,
    pub uniform_fallback: bool,
}

/// With probability `p`, inserts one token into each gap. A sequence of
/// length `n` has `n` gaps, one after each token; the empty sequence has a
/// single gap.
pub fn insert_tokens(tokens: &[u32], p: f64, policy: InsertPolicy, k: usize, seed: u64) -> Inserted {
    assert!(k >= 1, "vocabulary must be non-empty");
    let mut rng = rng_from(seed);
    if tokens.is_empty() {
        let fallback = policy == InsertPolicy::Neighbor;
        let out = if rng.random_bool(p) { vec![rng.random_range(1..=k as u32)] } else { Vec::new() };
        return Inserted { tokens: out, uniform_fallback: fallback };
    }
    let mut out = Vec::with_capacity(tokens.len() * 2);
    for (i, &t) in tokens.iter().enumerate() {
        out.push(t);
        if rng.random_bool(p) {
            let new = match policy {
                InsertPolicy::Uniform => rng.random_range(1..=k as u32),
                InsertPolicy::Neighbor => match tokens.get(i + 1) {
                    Some(&next) if rng.random_bool(0.5) => next,
                    _ => t,
                },
            };
            out.push(new);
        }
    }
    Inserted { tokens: out, uniform_fallback: false }
}

/// Exchanges the runs `[a, a+len)` and `[b, b+len)`; they must not overlap.
pub fn swap_at(tokens: &[u32], a: usize, b: usize, len: usize) -> Vec<u32> {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    assert!(a + len <= b && b + len <= tokens.len(), "runs must be disjoint and in range");
    let mut out = tokens.to_vec();
    for i in 0..len {
        out.swap(a + i, b + i);
    }
    out
}

/// With probability `p`, swaps two disjoint runs of a random common length
/// `ℓ ≤ min(max_swap_len, n/2)`.
pub fn swap_segments(tokens: &[u32], max_swap_len: usize, p: f64, seed: u64) -> Vec<u32> {
    let mut rng = rng_from(seed);
    let cap = max_swap_len.min(tokens.len() / 2);
    if cap == 0 || !rng.random_bool(p) {
        return tokens.to_vec();
    }
    let len = rng.random_range(1..=cap);
    let n = tokens.len();
    let a = rng.random_range(0..=n - 2 * len);
    let b = rng.random_range(a + len..=n - len);
    swap_at(tokens, a, b, len)
}

/// Applies collapse, insert and swap in that order, each seeded from
/// `(cfg.seed, seed, op index)`.
pub fn augment(tokens: &[u32], cfg: &AugmentConfig, k: usize, seed: u64) -> Inserted {
    let base = derive_seed(cfg.seed, &[seed]);
    let collapsed = collapse_repeats(tokens, cfg.p_collapse, derive_seed(base, &[0]));
    let inserted = insert_tokens(&collapsed, cfg.p_insert, cfg.insert_policy, k, derive_seed(base, &[1]));
    let swapped = swap_segments(&inserted.tokens, cfg.max_swap_len, cfg.p_swap, derive_seed(base, &[2]));
    Inserted { tokens: swapped, uniform_fallback: inserted.uniform_fallback }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn collapse_examples() {
        assert_eq!(collapse_repeats(&[5, 5, 5, 2, 2, 7], 1.0, 0), vec![5, 2, 7]);
        assert_eq!(collapse_repeats(&[5, 5, 5, 2, 2, 7], 0.0, 0), vec![5, 5, 5, 2, 2, 7]);
        assert_eq!(collapse_repeats(&[1, 1, 2, 2], 0.5, 42), collapse_repeats(&[1, 1, 2, 2], 0.5, 42));
    }

    #[test]
    fn insert_examples() {
        let out = insert_tokens(&[3], 1.0, InsertPolicy::Neighbor, 10, 1);
        assert_eq!(out.tokens, vec![3, 3]);
        let empty = insert_tokens(&[], 1.0, InsertPolicy::Neighbor, 10, 1);
        assert!(empty.uniform_fallback);
        assert_eq!(empty.tokens.len(), 1);
        assert_eq!(insert_tokens(&[1, 2, 3], 0.0, InsertPolicy::Uniform, 3, 9).tokens, vec![1, 2, 3]);
    }

    #[test]
    fn swap_examples() {
        assert_eq!(swap_at(&[1, 2, 3, 4], 0, 2, 2), vec![3, 4, 1, 2]);
        assert_eq!(swap_segments(&[1, 2, 3, 4], 3, 0.0, 5), vec![1, 2, 3, 4]);
        assert_eq!(swap_segments(&[1], 3, 1.0, 5), vec![1]);
    }

    #[test]
    fn defaults() {
        let c = AugmentConfig::default();
        assert_eq!((c.p_collapse, c.p_insert, c.p_swap, c.max_swap_len), (0.3, 0.1, 0.2, 3));
        assert!(!c.enabled);
        assert!(AugmentConfig { p_swap: 1.5, ..c.clone() }.check().is_err());
        assert!(AugmentConfig { max_swap_len: 0, ..c }.check().is_err());
    }

    proptest! {
        #[test]
        fn identity_at_zero(tokens in prop::collection::vec(1u32..6, 0..40), seed: u64) {
            prop_assert_eq!(collapse_repeats(&tokens, 0.0, seed), tokens.clone());
            prop_assert_eq!(insert_tokens(&tokens, 0.0, InsertPolicy::Uniform, 5, seed).tokens, tokens.clone());
            prop_assert_eq!(swap_segments(&tokens, 3, 0.0, seed), tokens);
        }

        #[test]
        fn length_and_multiset_contracts(tokens in prop::collection::vec(1u32..6, 0..40), p in 0.0f64..=1.0, seed: u64) {
            prop_assert!(collapse_repeats(&tokens, p, seed).len() <= tokens.len());
            let ins = insert_tokens(&tokens, p, InsertPolicy::Neighbor, 5, seed).tokens;
            prop_assert!(ins.len() >= tokens.len());
            let mut swapped = swap_segments(&tokens, 3, p, seed);
            prop_assert_eq!(swapped.len(), tokens.len());
            let mut sorted = tokens.clone();
            sorted.sort();
            swapped.sort();
            prop_assert_eq!(swapped, sorted);
        }

        #[test]
        fn full_collapse_has_no_repeats(tokens in prop::collection::vec(1u32..4, 0..40), seed: u64) {
            let out = collapse_repeats(&tokens, 1.0, seed);
            prop_assert!(out.windows(2).all(|w| w[0] != w[1]));
        }

        #[test]
        fn neighbor_inserts_copy_adjacent_tokens(tokens in prop::collection::vec(1u32..100, 1..20), seed: u64) {
            let out = insert_tokens(&tokens, 1.0, InsertPolicy::Neighbor, 100, seed).tokens;
            prop_assert_eq!(out.len(), 2 * tokens.len());
            for (i, pair) in out.chunks(2).enumerate() {
                prop_assert_eq!(pair[0], tokens[i]);
                prop_assert!(pair[1] == tokens[i] || Some(&pair[1]) == tokens.get(i + 1));
            }
        }
    }
}
