//! Fusion projection: the top-`d` principal directions of the training
//! features.
//!
//! Small problems use an exact symmetric eigendecomposition of the covariance
//! or Gram matrix. Large ones use randomized subspace iteration with a fixed
//! internal seed, which is deterministic for identical inputs.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TokenizerError;
use crate::util::rng_from;

const EXACT_LIMIT: usize = 600;
const OVERSAMPLE: usize = 10;
const POWER_ITERS: usize = 3;
const SKETCH_SEED: u64 = 0x9e1f_0c7a_55d2_0003;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    #[serde(with = "crate::util::sig9")]
    pub mean: Vec<f64>,
    /// `d` rows of input dimension; rows past `rank` are zero.
    #[serde(with = "crate::util::sig9::nested")]
    pub basis: Vec<Vec<f64>>,
    /// Variance captured by each direction.
    #[serde(with = "crate::util::sig9")]
    pub variances: Vec<f64>,
    pub rank: usize,
    /// Set when fewer than `d` directions carry variance.
    pub rank_deficient: bool,
    pub method: String,
}

impl Projection {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, TokenizerError> {
        if x.len() != self.input_dim() {
            return Err(TokenizerError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(self
            .basis
            .iter()
            .map(|b| b.iter().zip(x).zip(&self.mean).map(|((bi, xi), mi)| bi * (xi - mi)).sum())
            .collect())
    }

    /// Maps a projected vector back to input space.
    pub fn lift(&self, h: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (b, &hi) in self.basis.iter().zip(h) {
            for (o, bi) in out.iter_mut().zip(b) {
                *o += hi * bi;
            }
        }
        out
    }
}

fn eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn orthonormal_columns(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Fits the top-`d` principal directions of `rows`.
pub fn fit_projection(rows: &[Vec<f64>], d: usize) -> Result<Projection, TokenizerError> {
    let n = rows.len();
    if d == 0 || n <= d {
        return Err(TokenizerError::TooFewFeatures { n, d });
    }
    let dim = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(TokenizerError::DimensionMismatch { expected: dim, got: r.len() });
    }
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let x = DMatrix::from_fn(n, dim, |i, j| rows[i][j] - mean[j]);

    // Directions as columns of `dirs` with matching variances.
    let (variances, dirs, method): (Vec<f64>, DMatrix<f64>, &str) = if dim <= EXACT_LIMIT {
        let cov = x.tr_mul(&x) / n as f64;
        let (vals, vecs) = eigen_desc(cov);
        (vals, vecs, "exact-covariance")
    } else if n <= EXACT_LIMIT {
        let gram = &x * x.transpose();
        let (vals, u) = eigen_desc(gram);
        let v = x.tr_mul(&u.columns(0, d.min(vals.len())));
        let dirs = DMatrix::from_fn(dim, v.ncols(), |r, c| if vals[c] > 0.0 { v[(r, c)] / vals[c].sqrt() } else { 0.0 });
        (vals.iter().map(|l| l / n as f64).collect(), dirs, "exact-gram")
    } else {
        let l = (d + OVERSAMPLE).min(n).min(dim);
        let mut rng = rng_from(SKETCH_SEED);
        let omega = DMatrix::from_fn(dim, l, |_, _| StandardNormal.sample(&mut rng));
        let mut q = orthonormal_columns(&x * omega);
        for _ in 0..POWER_ITERS {
            let z = orthonormal_columns(x.tr_mul(&q));
            q = orthonormal_columns(&x * z);
        }
        let b = q.tr_mul(&x);
        let (vals, u) = eigen_desc(&b * b.transpose());
        let v = b.tr_mul(&u);
        let dirs = DMatrix::from_fn(dim, vals.len(), |r, c| if vals[c] > 0.0 { v[(r, c)] / vals[c].sqrt() } else { 0.0 });
        (vals.iter().map(|l| l / n as f64).collect(), dirs, "randomized-subspace")
    };

    let top = variances.first().copied().unwrap_or(0.0);
    let rank = if top > 0.0 { variances.iter().take(d).filter(|&&v| v > top * RANK_TOL).count() } else { 0 };

    // Re-orthonormalize the kept directions (twice-iterated Gram-Schmidt).
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    for k in 0..rank {
        let mut v: Vec<f64> = dirs.column(k).iter().copied().collect();
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = b.iter().zip(&v).map(|(p, q)| p * q).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= dot * bi;
                }
            }
        }
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        for vi in &mut v {
            *vi /= norm;
        }
        basis.push(v);
    }
    basis.resize(d, vec![0.0; dim]);
    let mut kept: Vec<f64> = variances.iter().take(rank).copied().collect();
    kept.resize(d, 0.0);
    Ok(Projection { mean, basis, variances: kept, rank, rank_deficient: rank < d, method: method.to_string() })
}
