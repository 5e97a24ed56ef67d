use serde::{Deserialize, Serialize};

use crate::util::fnv1a64;

/// Unit-norm hashed character n-gram bag. `empty` marks the zero vector
/// produced for blank text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedding {
    pub values: Vec<f64>,
    pub empty: bool,
}

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// Character n-grams, n ∈ {3, 4, 5}, of the normalized text, hashed with
/// FNV-1a into `dim` buckets. Texts shorter than three characters hash as a
/// single gram.
pub fn embed_text(text: &str, dim: usize) -> TextEmbedding {
    assert!(dim > 0, "embedding dimension must be positive");
    let norm = normalize_text(text);
    let mut values = vec![0.0; dim];
    if norm.is_empty() {
        return TextEmbedding { values, empty: true };
    }
    let bump = |values: &mut Vec<f64>, gram: &str| {
        values[(fnv1a64(gram.as_bytes()) % dim as u64) as usize] += 1.0;
    };
    let bounds: Vec<usize> = norm.char_indices().map(|(i, _)| i).chain([norm.len()]).collect();
    let chars = bounds.len() - 1;
    if chars < 3 {
        bump(&mut values, &norm);
    } else {
        for n in 3..=5 {
            for s in 0..chars.saturating_sub(n - 1) {
                bump(&mut values, &norm[bounds[s]..bounds[s + n]]);
            }
        }
    }
    let length = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= length;
    }
    TextEmbedding { values, empty: false }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some((dot / (na * nb)).clamp(-1.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from;
    use rand::Rng;

    #[test]
    fn deterministic_and_normalized() {
        let a = embed_text("walk forward", 512);
        let b = embed_text("walk forward", 512);
        assert_eq!(a, b);
        assert!((cosine(&a.values, &b.values).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(embed_text("WALK  forward", 512), a);
        let n: f64 = a.values.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_short_text() {
        let e = embed_text("   ", 64);
        assert!(e.empty);
        assert!(e.values.iter().all(|&v| v == 0.0));
        let s = embed_text("ab", 64);
        assert!(!s.empty);
        assert_eq!(s.values.iter().filter(|&&v| v > 0.0).count(), 1);
    }

    #[test]
    fn gram_count_matches_length() {
        // 12 characters: 10 + 9 + 8 grams. Bucket collisions cannot change the total mass.
        let text = "walk forward";
        let dim = 1 << 20;
        let v = embed_text(text, dim);
        let scale = v.values.iter().copied().fold(0.0, f64::max);
        let total: f64 = v.values.iter().map(|x| (x / scale).round()).sum();
        assert_eq!(total, 27.0);
    }

    #[test]
    fn unrelated_strings_are_dissimilar() {
        let mut rng = rng_from(77);
        let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyz ".chars().collect();
        let mut random = || -> String { (0..50).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect() };
        let mut below = 0;
        for _ in 0..1000 {
            let (a, b) = (random(), random());
            if cosine(&embed_text(&a, 512).values, &embed_text(&b, 512).values).unwrap() < 0.5 {
                below += 1;
            }
        }
        assert!(below > 990, "{below}");
    }
}
