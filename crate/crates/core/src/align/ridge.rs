use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::segment::SparseVec;
use super::text::{cosine, TextEmbedding};
use super::AlignError;
use crate::util::fingerprint;

const PINV_TOL: f64 = 1e-12;

/// Linear map `W` from segment-embedding space to text-embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMap {
    pub lambda: f64,
    pub text_dim: usize,
    pub segment_dim: usize,
    /// Fingerprint of the sorted training segment ids.
    pub fingerprint: String,
    /// Set when `lambda = 0` and the design does not have full column rank;
    /// `W` is then the minimum-norm least-squares solution.
    pub rank_deficient: bool,
    pub pairs: usize,
    /// Column-major: column `j` holds `W[.., j]`.
    columns: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AlignmentFile {
    lambda: f64,
    text_dim: usize,
    segment_dim: usize,
    fingerprint: String,
    rank_deficient: bool,
    pairs: usize,
    #[serde(with = "crate::util::sig9::nested")]
    w: Vec<Vec<f64>>,
}

/// Ridge regression `min_W Σ ||W u_i − v_i||² + λ ||W||_F²` solved in dual
/// form, `W = Vᵀ (U Uᵀ + λ I)⁻¹ U`, which suits wide sparse designs. With
/// `λ = 0` the pseudo-inverse gives the minimum-norm solution.
pub fn fit_alignment(
    inputs: &[SparseVec],
    targets: &[Vec<f64>],
    lambda: f64,
    train_ids: &[&str],
) -> Result<AlignmentMap, AlignError> {
    let n = inputs.len();
    if n == 0 {
        return Err(AlignError::InvalidInput("no training pairs".into()));
    }
    if targets.len() != n {
        return Err(AlignError::InvalidInput(format!("{n} inputs but {} targets", targets.len())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(AlignError::InvalidInput(format!("lambda {lambda} must be non-negative")));
    }
    let segment_dim = inputs[0].dim;
    let text_dim = targets[0].len();
    if inputs.iter().any(|u| u.dim != segment_dim) || targets.iter().any(|v| v.len() != text_dim) {
        return Err(AlignError::InvalidInput("inconsistent embedding dimensions".into()));
    }
    let gram = DMatrix::from_fn(n, n, |i, j| inputs[i].dot(&inputs[j]));
    let v = DMatrix::from_fn(n, text_dim, |i, j| targets[i][j]);

    let (dual, rank_deficient) = if lambda > 0.0 {
        let shifted = &gram + DMatrix::identity(n, n) * lambda;
        let chol = shifted
            .cholesky()
            .ok_or_else(|| AlignError::Numerical("regularized Gram matrix is not positive definite".into()))?;
        (chol.solve(&v), false)
    } else {
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let q = &eig.eigenvectors;
        let mut inv = DMatrix::zeros(n, n);
        let mut rank = 0;
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            if top > 0.0 && l > top * PINV_TOL {
                rank += 1;
                let col = q.column(k);
                inv += (col * col.transpose()) / l;
            }
        }
        (inv * v, rank < segment_dim)
    };

    let mut columns = vec![0.0; segment_dim * text_dim];
    for (i, u) in inputs.iter().enumerate() {
        let row = dual.row(i);
        for &(j, x) in &u.entries {
            let col = &mut columns[j * text_dim..(j + 1) * text_dim];
            for (c, a) in col.iter_mut().zip(row.iter()) {
                *c += a * x;
            }
        }
    }
    Ok(AlignmentMap {
        lambda,
        text_dim,
        segment_dim,
        fingerprint: fingerprint(train_ids),
        rank_deficient,
        pairs: n,
        columns,
    })
}

/// Cosine score with a flag for a zero operand (score 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    pub index: usize,
    pub score: f64,
}

impl AlignmentMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col * self.text_dim + row]
    }

    /// `W x`.
    pub fn apply(&self, x: &SparseVec) -> Result<Vec<f64>, AlignError> {
        if x.dim != self.segment_dim {
            return Err(AlignError::DimensionMismatch { expected: self.segment_dim, got: x.dim });
        }
        let mut out = vec![0.0; self.text_dim];
        for &(j, v) in &x.entries {
            for (o, w) in out.iter_mut().zip(&self.columns[j * self.text_dim..(j + 1) * self.text_dim]) {
                *o += v * w;
            }
        }
        Ok(out)
    }

    pub fn score(&self, x: &SparseVec, t: &[f64]) -> Result<Score, AlignError> {
        if t.len() != self.text_dim {
            return Err(AlignError::DimensionMismatch { expected: self.text_dim, got: t.len() });
        }
        Ok(score_projected(&self.apply(x)?, t))
    }

    pub fn retrieve(&self, x: &SparseVec, candidates: &[TextEmbedding]) -> Result<Vec<Ranked>, AlignError> {
        if candidates.is_empty() {
            return Err(AlignError::EmptyPool);
        }
        if let Some(c) = candidates.iter().find(|c| c.values.len() != self.text_dim) {
            return Err(AlignError::DimensionMismatch { expected: self.text_dim, got: c.values.len() });
        }
        let wx = self.apply(x)?;
        let scores: Vec<f64> = candidates.iter().map(|c| score_projected(&wx, &c.values).value).collect();
        Ok(rank_scores(&scores))
    }

    /// Index of the best-scoring class text; identical to the head of [`AlignmentMap::retrieve`].
    pub fn classify(&self, x: &SparseVec, class_texts: &[TextEmbedding]) -> Result<usize, AlignError> {
        Ok(self.retrieve(x, class_texts)?[0].index)
    }

    pub fn to_json(&self) -> String {
        let w = (0..self.text_dim).map(|r| (0..self.segment_dim).map(|c| self.get(r, c)).collect()).collect();
        let file = AlignmentFile {
            lambda: self.lambda,
            text_dim: self.text_dim,
            segment_dim: self.segment_dim,
            fingerprint: self.fingerprint.clone(),
            rank_deficient: self.rank_deficient,
            pairs: self.pairs,
            w,
        };
        serde_json::to_string(&file).expect("alignment map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AlignError> {
        let f: AlignmentFile = serde_json::from_str(text).map_err(|e| AlignError::InvalidInput(e.to_string()))?;
        if f.w.len() != f.text_dim || f.w.iter().any(|r| r.len() != f.segment_dim) {
            return Err(AlignError::InvalidInput("W does not match its stated dimensions".into()));
        }
        let mut columns = vec![0.0; f.text_dim * f.segment_dim];
        for (r, row) in f.w.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                columns[c * f.text_dim + r] = v;
            }
        }
        Ok(Self {
            lambda: f.lambda,
            text_dim: f.text_dim,
            segment_dim: f.segment_dim,
            fingerprint: f.fingerprint,
            rank_deficient: f.rank_deficient,
            pairs: f.pairs,
            columns,
        })
    }
}

pub fn score_projected(wx: &[f64], t: &[f64]) -> Score {
    match cosine(wx, t) {
        Some(value) => Score { value, degenerate: false },
        None => Score { value: 0.0, degenerate: true },
    }
}

/// Candidate indices by descending score; ties keep index order.
pub fn rank_scores(scores: &[f64]) -> Vec<Ranked> {
    let mut ranked: Vec<Ranked> = scores.iter().enumerate().map(|(index, &score)| Ranked { index, score }).collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from;
    use rand::Rng;

    fn basis(dim: usize, i: usize) -> SparseVec {
        SparseVec { dim, entries: vec![(i, 1.0)] }
    }

    #[test]
    fn orthonormal_identity_and_shrinkage() {
        let us: Vec<SparseVec> = (0..3).map(|i| basis(3, i)).collect();
        let vs: Vec<Vec<f64>> = (0..3).map(|i| us[i].to_dense()).collect();
        let w0 = fit_alignment(&us, &vs, 0.0, &["a", "b", "c"]).unwrap();
        let w1 = fit_alignment(&us, &vs, 1.0, &["a", "b", "c"]).unwrap();
        assert!(!w0.rank_deficient);
        for r in 0..3 {
            for c in 0..3 {
                let id = if r == c { 1.0 } else { 0.0 };
                assert!((w0.get(r, c) - id).abs() < 1e-9);
                assert!((w1.get(r, c) - id / 2.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_pair_closed_form() {
        let u = SparseVec { dim: 3, entries: vec![(0, 1.0), (2, 2.0)] };
        let v = vec![0.5, -1.0];
        let w = fit_alignment(std::slice::from_ref(&u), std::slice::from_ref(&v), 0.7, &["x"]).unwrap();
        let ud = u.to_dense();
        let denom = 5.0 + 0.7;
        for r in 0..2 {
            for c in 0..3 {
                assert!((w.get(r, c) - v[r] * ud[c] / denom).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normal_equations_hold() {
        // W (UᵀU + λI) = VᵀU.
        let mut rng = rng_from(2);
        let (n, du, dt, lambda) = (12, 7, 4, 0.3);
        let us: Vec<SparseVec> = (0..n)
            .map(|_| SparseVec {
                dim: du,
                entries: (0..du)
                    .filter_map(|j| rng.random_bool(0.5).then(|| (j, rng.random_range(-1.0..1.0))))
                    .collect(),
            })
            .collect();
        let vs: Vec<Vec<f64>> = (0..n).map(|_| (0..dt).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let map = fit_alignment(&us, &vs, lambda, &[]).unwrap();
        let u = DMatrix::from_fn(n, du, |i, j| us[i].to_dense()[j]);
        let v = DMatrix::from_fn(n, dt, |i, j| vs[i][j]);
        let w = DMatrix::from_fn(dt, du, |r, c| map.get(r, c));
        let lhs = &w * (u.transpose() * &u + DMatrix::identity(du, du) * lambda);
        let rhs = v.transpose() * &u;
        assert!((lhs - &rhs).norm() <= 1e-6 * rhs.norm());
    }

    #[test]
    fn rank_deficient_zero_lambda_is_flagged() {
        let us = vec![basis(4, 0), basis(4, 0), basis(4, 1)];
        let vs = vec![vec![1.0], vec![3.0], vec![2.0]];
        let w = fit_alignment(&us, &vs, 0.0, &[]).unwrap();
        assert!(w.rank_deficient);
        assert!((w.get(0, 0) - 2.0).abs() < 1e-9);
        assert!((w.get(0, 1) - 2.0).abs() < 1e-9);
        assert!(w.get(0, 2).abs() < 1e-12 && w.get(0, 3).abs() < 1e-12);
    }

    #[test]
    fn scoring_and_ranking() {
        let us: Vec<SparseVec> = (0..2).map(|i| basis(2, i)).collect();
        let vs: Vec<Vec<f64>> = us.iter().map(|u| u.to_dense()).collect();
        let w = fit_alignment(&us, &vs, 0.0, &[]).unwrap();
        assert!((w.score(&us[0], &[1.0, 0.0]).unwrap().value - 1.0).abs() < 1e-12);
        assert!(w.score(&us[0], &[0.0, 1.0]).unwrap().value.abs() < 1e-12);
        let zero = w.score(&SparseVec { dim: 2, entries: vec![] }, &[1.0, 0.0]).unwrap();
        assert!(zero.degenerate && zero.value == 0.0);
        let order: Vec<usize> = rank_scores(&[0.9, 0.1, 0.5]).iter().map(|r| r.index + 1).collect();
        assert_eq!(order, vec![1, 3, 2]);
        let tied: Vec<usize> = rank_scores(&[0.2, 0.7, 0.7, 0.2]).iter().map(|r| r.index).collect();
        assert_eq!(tied, vec![1, 2, 0, 3]);
        assert!(matches!(w.retrieve(&us[0], &[]), Err(AlignError::EmptyPool)));
    }

    #[test]
    fn json_round_trip() {
        let us: Vec<SparseVec> = (0..3).map(|i| basis(3, i)).collect();
        let vs = vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]];
        let w = fit_alignment(&us, &vs, 0.5, &["b", "a"]).unwrap();
        let back = AlignmentMap::from_json(&w.to_json()).unwrap();
        assert_eq!(back.fingerprint, w.fingerprint);
        assert!((back.get(1, 2) - w.get(1, 2)).abs() < 1e-9);
    }
}
