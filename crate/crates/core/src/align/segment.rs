use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AlignError;
use crate::dataset::Position;
use crate::util::fingerprint;

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVec {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn scale(&mut self, s: f64) {
        for e in &mut self.entries {
            e.1 *= s;
        }
    }
}

fn d_bigrams() -> usize {
    1024
}
fn d_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFeatureParams {
    /// Most frequent training bigrams kept in the vocabulary.
    #[serde(default = "d_bigrams")]
    pub max_bigrams: usize,
    /// Position-agnostic block over the pooled tokens of every present position.
    #[serde(default = "d_true")]
    pub mean_pool: bool,
    /// One block per position in the encoder's position set.
    #[serde(default = "d_true")]
    pub per_position: bool,
}

impl Default for SegmentFeatureParams {
    fn default() -> Self {
        Self { max_bigrams: d_bigrams(), mean_pool: true, per_position: true }
    }
}

/// Vocabulary and inverse document frequencies over (segment, position)
/// token sequences of a training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEncoder {
    pub k: usize,
    pub params: SegmentFeatureParams,
    /// Block order of the per-position blocks.
    pub positions: Vec<Position>,
    pub bigrams: Vec<(u32, u32)>,
    #[serde(with = "crate::util::sig9")]
    pub idf: Vec<f64>,
    pub documents: usize,
    pub fingerprint: String,
    #[serde(skip)]
    bigram_index: BTreeMap<(u32, u32), usize>,
}

/// One training document: the tokens of one position in one segment.
pub struct Document<'a> {
    pub segment_id: &'a str,
    pub tokens: &'a [u32],
}

impl SegmentEncoder {
    /// Fits on training documents. Only training data may be passed here.
    pub fn fit(docs: &[Document<'_>], k: usize, positions: &[Position], params: SegmentFeatureParams) -> Self {
        let mut bigram_df: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for d in docs {
            let mut seen: Vec<(u32, u32)> = d.tokens.windows(2).map(|w| (w[0], w[1])).collect();
            seen.sort_unstable();
            seen.dedup();
            for b in seen {
                *bigram_df.entry(b).or_default() += 1;
            }
        }
        let mut ranked: Vec<((u32, u32), usize)> = bigram_df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(params.max_bigrams);
        let mut bigrams: Vec<(u32, u32)> = ranked.into_iter().map(|(b, _)| b).collect();
        bigrams.sort_unstable();

        let mut positions = positions.to_vec();
        positions.sort();
        positions.dedup();
        let ids: Vec<&str> = docs.iter().map(|d| d.segment_id).collect();
        let mut enc = Self {
            k,
            params,
            positions,
            bigrams,
            idf: Vec::new(),
            documents: docs.len(),
            fingerprint: fingerprint(&ids),
            bigram_index: BTreeMap::new(),
        };
        enc.rebuild_index();
        let mut df = vec![0usize; enc.vocab()];
        for d in docs {
            for (term, _) in enc.term_counts(d.tokens) {
                df[term] += 1;
            }
        }
        let n = docs.len() as f64;
        enc.idf = df.iter().map(|&f| ((1.0 + n) / (1.0 + f as f64)).ln() + 1.0).collect();
        enc
    }

    /// Restores the lookup table after deserialization.
    pub fn rebuild_index(&mut self) {
        self.bigram_index = self.bigrams.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    }

    pub fn vocab(&self) -> usize {
        self.k + self.bigrams.len()
    }

    fn block_count(&self) -> usize {
        usize::from(self.params.mean_pool) + if self.params.per_position { self.positions.len() } else { 0 }
    }

    pub fn dim(&self) -> usize {
        self.block_count() * self.vocab() + Position::COUNT + 1
    }

    /// Index of the log-duration coordinate.
    pub fn duration_index(&self) -> usize {
        self.dim() - 1
    }

    /// Sorted (term, count) pairs; unknown bigrams and out-of-range tokens are ignored.
    fn term_counts(&self, tokens: &[u32]) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for &t in tokens {
            if t >= 1 && t as usize <= self.k {
                *counts.entry(t as usize - 1).or_default() += 1.0;
            }
        }
        for w in tokens.windows(2) {
            if let Some(&i) = self.bigram_index.get(&(w[0], w[1])) {
                *counts.entry(self.k + i).or_default() += 1.0;
            }
        }
        counts.into_iter().collect()
    }

    fn tfidf_block(&self, counts: &[(usize, f64)], offset: usize, out: &mut Vec<(usize, f64)>) {
        let weighted: Vec<(usize, f64)> = counts.iter().map(|&(i, c)| (i, c * self.idf[i])).collect();
        let norm = weighted.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.extend(weighted.into_iter().map(|(i, v)| (offset + i, v / norm)));
        }
    }

    /// Embeds one segment from the token sequences of its available positions.
    pub fn encode(&self, seqs: &[(Position, &[u32])], duration_s: f64) -> Result<SparseVec, AlignError> {
        if seqs.iter().all(|(_, t)| t.is_empty()) {
            return Err(AlignError::EmptySegment);
        }
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(AlignError::InvalidInput(format!("duration {duration_s} must be positive")));
        }
        let vocab = self.vocab();
        let mut entries = Vec::new();
        let mut block = 0;
        if self.params.mean_pool {
            let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
            for (_, tokens) in seqs {
                for (i, c) in self.term_counts(tokens) {
                    *counts.entry(i).or_default() += c;
                }
            }
            let counts: Vec<(usize, f64)> = counts.into_iter().collect();
            self.tfidf_block(&counts, 0, &mut entries);
            block += 1;
        }
        if self.params.per_position {
            for (bi, p) in self.positions.iter().enumerate() {
                let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
                for (_, tokens) in seqs.iter().filter(|(q, _)| q == p) {
                    for (i, c) in self.term_counts(tokens) {
                        *counts.entry(i).or_default() += c;
                    }
                }
                let counts: Vec<(usize, f64)> = counts.into_iter().collect();
                self.tfidf_block(&counts, (block + bi) * vocab, &mut entries);
            }
            block += self.positions.len();
        }
        let presence_offset = block * vocab;
        let mut present: Vec<usize> = seqs.iter().map(|(p, _)| p.index()).collect();
        present.sort_unstable();
        present.dedup();
        entries.extend(present.into_iter().map(|i| (presence_offset + i, 1.0)));
        entries.push((self.duration_index(), duration_s.ln()));
        Ok(SparseVec { dim: self.dim(), entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encoder() -> SegmentEncoder {
        let a = [1u32, 2, 2, 3];
        let b = [3u32, 4];
        let docs = [Document { segment_id: "a", tokens: &a }, Document { segment_id: "b", tokens: &b }];
        SegmentEncoder::fit(&docs, 4, &[Position::WristR, Position::ThighL], SegmentFeatureParams::default())
    }

    #[test]
    fn vocabulary_and_idf() {
        let e = encoder();
        assert_eq!(e.bigrams, vec![(1, 2), (2, 2), (2, 3), (3, 4)]);
        assert_eq!(e.vocab(), 8);
        // Token 3 appears in both documents, token 1 in one.
        assert!((e.idf[2] - 1.0).abs() < 1e-15);
        assert!((e.idf[0] - ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-15);
        assert_eq!(e.dim(), 3 * 8 + 15 + 1);
    }

    #[test]
    fn absent_positions_give_zero_blocks() {
        let e = encoder();
        let toks = [1u32, 2];
        let v = e.encode(&[(Position::WristR, &toks)], 2.0).unwrap().to_dense();
        // Blocks: pooled, wrist_r, thigh_l (enum order).
        assert!(v[8..16].iter().any(|&x| x != 0.0));
        assert!(v[16..24].iter().all(|&x| x == 0.0));
        assert_eq!(v[24 + Position::WristR.index()], 1.0);
        assert_eq!(v[24 + Position::ThighL.index()], 0.0);
    }

    #[test]
    fn log_duration_coordinate() {
        let e = encoder();
        let toks = [1u32, 3];
        let a = e.encode(&[(Position::ThighL, &toks)], 1.0).unwrap().to_dense();
        let c = e.encode(&[(Position::ThighL, &toks)], std::f64::consts::E.powi(2)).unwrap().to_dense();
        let diff: Vec<usize> = (0..a.len()).filter(|&i| a[i] != c[i]).collect();
        assert_eq!(diff, vec![e.duration_index()]);
        assert!((c[e.duration_index()] - a[e.duration_index()] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors_and_determinism() {
        let e = encoder();
        assert!(matches!(e.encode(&[(Position::WristR, &[])], 1.0), Err(AlignError::EmptySegment)));
        assert!(e.encode(&[], 1.0).is_err());
        let toks = [4u32, 4, 1];
        assert_eq!(e.encode(&[(Position::WristR, &toks)], 3.0), e.encode(&[(Position::WristR, &toks)], 3.0));
    }

    #[test]
    fn sparse_dot() {
        let a = SparseVec { dim: 5, entries: vec![(0, 1.0), (3, 2.0)] };
        let b = SparseVec { dim: 5, entries: vec![(3, 4.0), (4, 1.0)] };
        assert_eq!(a.dot(&b), 8.0);
    }
}
