//! Shared codebook: k-means codewords over fused features, nearest-codeword
//! quantization and overlap-add decoding through per-codeword templates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::chunk::{Chunk, ChunkGrid};
use super::TokenizerError;
use crate::dataset::Position;
use crate::signal::Signal;
use crate::util::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub iterations: usize,
    /// Total distortion after each assignment step; non-increasing.
    #[serde(with = "crate::util::sig9")]
    pub distortion_history: Vec<f64>,
    pub final_distortion: f64,
    pub converged: bool,
    pub reseeded: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    #[serde(with = "crate::util::sig9::nested")]
    pub codewords: Vec<Vec<f64>>,
    /// Decode template per codeword, `chunk_len × C` row-major.
    #[serde(with = "crate::util::sig9::nested")]
    pub templates: Vec<Vec<f64>>,
    pub chunk_len: usize,
    pub channels: usize,
    pub usage: Vec<usize>,
    pub fit: FitInfo,
}

/// Token ids of one position over one interval, 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub position: Position,
    pub tokens: Vec<u32>,
    /// Chunk starts relative to the interval start, one per token.
    pub starts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_id: Option<String>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest codeword; ties go to the lowest index.
fn nearest(h: &[f64], codewords: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, e) in codewords.iter().enumerate() {
        let d = sq_dist(h, e);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.codewords.len()
    }

    pub fn dim(&self) -> usize {
        self.codewords.first().map_or(0, Vec::len)
    }

    /// Nearest codeword as a 1-based token id.
    pub fn quantize(&self, h: &[f64]) -> Result<u32, TokenizerError> {
        if h.len() != self.dim() {
            return Err(TokenizerError::DimensionMismatch { expected: self.dim(), got: h.len() });
        }
        Ok(nearest(h, &self.codewords).0 as u32 + 1)
    }

    pub fn template(&self, token: u32) -> Result<&[f64], TokenizerError> {
        let k = self.k();
        if token == 0 || token as usize > k {
            return Err(TokenizerError::TokenOutOfRange { token, k });
        }
        Ok(&self.templates[token as usize - 1])
    }

    /// Overlap-adds the templates of `tokens` onto a `grid.len × C` signal,
    /// averaging by coverage. Uncovered samples are zero.
    pub fn decode(&self, tokens: &[u32], grid: &ChunkGrid) -> Result<Signal, TokenizerError> {
        if tokens.len() != grid.starts.len() {
            return Err(TokenizerError::InvalidParams(format!(
                "{} tokens for a grid of {} chunks",
                tokens.len(),
                grid.starts.len()
            )));
        }
        if grid.chunk_len != self.chunk_len {
            return Err(TokenizerError::InvalidParams(format!(
                "grid chunk length {} differs from codebook chunk length {}",
                grid.chunk_len, self.chunk_len
            )));
        }
        let c = self.channels;
        let mut sum = Signal::zeros(grid.len, c);
        let mut cover = vec![0u32; grid.len];
        for (&tok, &start) in tokens.iter().zip(&grid.starts) {
            let tpl = self.template(tok)?;
            for t in 0..self.chunk_len {
                cover[start + t] += 1;
                for (o, v) in sum.row_mut(start + t).iter_mut().zip(&tpl[t * c..(t + 1) * c]) {
                    *o += v;
                }
            }
        }
        for (t, &n) in cover.iter().enumerate() {
            if n > 1 {
                for v in sum.row_mut(t) {
                    *v /= n as f64;
                }
            }
        }
        Ok(sum)
    }
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    if target < d {
                        chosen = Some(i);
                        break;
                    }
                    target -= d;
                }
            }
            // Rounding can run past the end; fall back to the last positive weight.
            chosen.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            break;
        };
        let c = points[idx].clone();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(points: &[Vec<f64>], codewords: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    let mut total = 0.0;
    for p in points {
        let (k, d) = nearest(p, codewords);
        labels.push(k);
        dists.push(d);
        total += d;
    }
    (labels, dists, total)
}

fn count_distinct(points: &[Vec<f64>], limit: usize) -> usize {
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.iter().any(|q| *q == p) {
            distinct.push(p);
            if distinct.len() >= limit {
                break;
            }
        }
    }
    distinct.len()
}

/// Lloyd iterations from a k-means++ start. Clusters that empty out (or whose
/// centroid coincides with another) are re-seeded at the point farthest from
/// its codeword. The recorded distortion never increases: an iteration that
/// would raise it is discarded and fitting stops.
pub fn fit_codewords(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<usize>, FitInfo), TokenizerError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(TokenizerError::TooFewPoints { k, n });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(TokenizerError::DimensionMismatch { expected: dim, got: p.len() });
    }
    let distinct = count_distinct(points, k);
    if distinct < k {
        return Err(TokenizerError::TooFewDistinct { k, distinct });
    }
    let mut rng = rng_from(seed);
    let mut codewords = kmeans_pp(points, k, &mut rng);
    let (mut labels, mut dists, mut distortion) = assign(points, &codewords);
    let mut history = vec![distortion];
    let mut converged = false;
    let mut reseeded = 0;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut next = codewords.clone();
        for j in 0..k {
            if counts[j] > 0 {
                next[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // Empty or duplicated codewords move to the worst-served points.
        let mut needs_seed: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        for j in 1..k {
            if counts[j] > 0 && next[..j].iter().any(|e| *e == next[j]) {
                needs_seed.push(j);
            }
        }
        if !needs_seed.is_empty() {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
            let mut cursor = order.into_iter();
            for j in needs_seed {
                let candidate = cursor.by_ref().find(|&i| dists[i] > 0.0 && !next.iter().any(|e| *e == points[i]));
                if let Some(i) = candidate {
                    next[j] = points[i].clone();
                    reseeded += 1;
                }
            }
        }
        let (new_labels, new_dists, new_distortion) = assign(points, &next);
        if new_distortion > distortion {
            break;
        }
        let unchanged = new_labels == labels && next == codewords;
        codewords = next;
        labels = new_labels;
        dists = new_dists;
        distortion = new_distortion;
        history.push(distortion);
        if unchanged {
            converged = true;
            break;
        }
    }
    let info = FitInfo {
        iterations,
        distortion_history: history,
        final_distortion: distortion,
        converged,
        reseeded,
        seed,
    };
    Ok((codewords, labels, info))
}

/// Mean of the member chunks per codeword, entry by entry over unmasked
/// values. Accumulated as offsets from the first member so identical members
/// reproduce their value exactly. Entries with no observation are zero.
pub fn templates_from_chunks(labels: &[usize], chunks: &[&Chunk], k: usize) -> Vec<Vec<f64>> {
    let size = chunks.first().map_or(0, |c| c.mask.len());
    let mut base = vec![vec![f64::NAN; size]; k];
    let mut offset = vec![vec![0.0; size]; k];
    let mut count = vec![vec![0u32; size]; k];
    for (&l, ch) in labels.iter().zip(chunks) {
        for (i, (&v, &m)) in ch.data.as_slice().iter().zip(&ch.mask).enumerate() {
            if m {
                continue;
            }
            if count[l][i] == 0 {
                base[l][i] = v;
            } else {
                offset[l][i] += v - base[l][i];
            }
            count[l][i] += 1;
        }
    }
    (0..k)
        .map(|j| {
            (0..size)
                .map(|i| if count[j][i] == 0 { 0.0 } else { base[j][i] + offset[j][i] / count[j][i] as f64 })
                .collect()
        })
        .collect()
}

/// Fits codewords on `points` and decode templates on the matching raw chunks.
pub fn fit_codebook(
    points: &[Vec<f64>],
    chunks: &[&Chunk],
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<Codebook, TokenizerError> {
    if points.len() != chunks.len() {
        return Err(TokenizerError::InvalidParams("features and chunks differ in count".into()));
    }
    let (codewords, labels, fit) = fit_codewords(points, k, max_iters, seed)?;
    let mut usage = vec![0; k];
    for &l in &labels {
        usage[l] += 1;
    }
    let (chunk_len, channels) = chunks.first().map_or((0, 0), |c| c.data.shape());
    Ok(Codebook {
        templates: templates_from_chunks(&labels, chunks, k),
        codewords,
        chunk_len,
        channels,
        usage,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn book(codewords: Vec<Vec<f64>>) -> Codebook {
        let k = codewords.len();
        Codebook {
            codewords,
            templates: vec![vec![]; k],
            chunk_len: 0,
            channels: 0,
            usage: vec![0; k],
            fit: FitInfo {
                iterations: 0,
                distortion_history: vec![],
                final_distortion: 0.0,
                converged: true,
                reseeded: 0,
                seed: 0,
            },
        }
    }

    #[test]
    fn quantize_examples() {
        let cb = book(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 5.0]]);
        assert_eq!(cb.quantize(&[0.1, 0.2]).unwrap(), 1);
        assert_eq!(cb.quantize(&[5.0, 5.0]).unwrap(), 3);
        assert_eq!(cb.quantize(&[0.5, 0.5]).unwrap(), 1);
        assert!(cb.quantize(&[0.0]).is_err());
    }

    #[test]
    fn two_clusters_recover_means() {
        let mut rng = rng_from(5);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let n = 200;
        let mut pts = Vec::new();
        for i in 0..n {
            let c = if i % 2 == 0 { -5.0 } else { 5.0 };
            pts.push(vec![c + noise.sample(&mut rng), noise.sample(&mut rng)]);
        }
        let (cw, _, info) = fit_codewords(&pts, 2, 100, 1).unwrap();
        assert!(info.converged);
        let bound = 3.0 * 0.1 / ((n / 2) as f64).sqrt();
        let mut xs: Vec<f64> = cw.iter().map(|c| c[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] + 5.0).abs() < bound && (xs[1] - 5.0).abs() < bound);
    }

    #[test]
    fn k_equal_to_n_gives_zero_distortion() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let (_, labels, info) = fit_codewords(&pts, 6, 50, 9).unwrap();
        assert_eq!(info.final_distortion, 0.0);
        let mut l = labels.clone();
        l.sort();
        l.dedup();
        assert_eq!(l.len(), 6);
    }

    #[test]
    fn deterministic_and_errors() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 7) as f64, (i % 5) as f64]).collect();
        assert_eq!(fit_codewords(&pts, 4, 20, 3).unwrap(), fit_codewords(&pts, 4, 20, 3).unwrap());
        assert!(matches!(fit_codewords(&pts, 31, 20, 3), Err(TokenizerError::TooFewPoints { .. })));
        let same = vec![vec![1.0]; 5];
        assert!(matches!(fit_codewords(&same, 2, 20, 3), Err(TokenizerError::TooFewDistinct { .. })));
    }

    #[test]
    fn overlap_add_averages_shared_region() {
        let mut cb = book(vec![vec![0.0], vec![1.0]]);
        cb.chunk_len = 4;
        cb.channels = 1;
        cb.templates = vec![vec![1.0, 2.0, 3.0, 4.0], vec![10.0, 20.0, 30.0, 40.0]];
        let grid = ChunkGrid::new(6, 4, 2);
        let x = cb.decode(&[1, 2], &grid).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0, 6.5, 12.0, 30.0, 40.0]);
        let empty = ChunkGrid::new(3, 4, 2);
        assert!(cb.decode(&[], &empty).unwrap().as_slice().iter().all(|&v| v == 0.0));
        assert!(matches!(cb.decode(&[3, 1], &grid), Err(TokenizerError::TokenOutOfRange { .. })));
        // Samples past the last chunk stay zero.
        let tail = ChunkGrid::new(5, 4, 4);
        assert_eq!(cb.decode(&[2], &tail).unwrap().as_slice()[4], 0.0);
    }

    #[test]
    fn templates_are_exact_for_identical_members() {
        let a = Chunk::complete(Signal::from_vec(1, 2, vec![0.1, 0.7]).unwrap());
        let t = templates_from_chunks(&[0, 0, 0], &[&a, &a, &a], 1);
        assert_eq!(t[0], vec![0.1, 0.7]);
    }
}
