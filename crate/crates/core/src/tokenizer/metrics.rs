//! Representation metrics: time-domain reconstruction error, token
//! histograms and Jensen-Shannon divergence.

use super::TokenizerError;
use crate::signal::Signal;

/// Mean absolute error over entries not excluded by `mask`. Without a mask,
/// entries where `x` is NaN are excluded.
pub fn time_l1(x: &Signal, x_hat: &Signal, mask: Option<&[bool]>) -> Result<f64, TokenizerError> {
    let (sum, count) = time_l1_parts(x, x_hat, mask)?;
    if count == 0 {
        return Err(TokenizerError::AllMasked);
    }
    Ok(sum / count as f64)
}

/// Sum and count behind [`time_l1`], for pooling across segments.
pub fn time_l1_parts(x: &Signal, x_hat: &Signal, mask: Option<&[bool]>) -> Result<(f64, usize), TokenizerError> {
    if x.shape() != x_hat.shape() {
        return Err(TokenizerError::ShapeMismatch { expected: x.shape(), got: x_hat.shape() });
    }
    if let Some(m) = mask {
        if m.len() != x.as_slice().len() {
            return Err(TokenizerError::InvalidParams("mask length differs from signal size".into()));
        }
    }
    let mut sum = 0.0;
    let mut count = 0;
    for (i, (a, b)) in x.as_slice().iter().zip(x_hat.as_slice()).enumerate() {
        let skip = match mask {
            Some(m) => m[i],
            None => a.is_nan(),
        };
        if !skip {
            sum += (a - b).abs();
            count += 1;
        }
    }
    Ok((sum, count))
}

/// Normalized token counts; `tokens` are 1-based ids in `1..=k`.
pub fn token_histogram<'a>(tokens: impl IntoIterator<Item = &'a u32>, k: usize) -> Result<Vec<f64>, TokenizerError> {
    let mut counts = vec![0u64; k];
    let mut total = 0u64;
    for &t in tokens {
        if t == 0 || t as usize > k {
            return Err(TokenizerError::TokenOutOfRange { token: t, k });
        }
        counts[t as usize - 1] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(TokenizerError::EmptyTokens);
    }
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

fn check_distribution(p: &[f64]) -> Result<(), TokenizerError> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(TokenizerError::InvalidDistribution("negative or non-finite entry".into()));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(TokenizerError::InvalidDistribution(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// Jensen-Shannon divergence with base-2 logarithms, in `[0, 1]`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64, TokenizerError> {
    if p.len() != q.len() {
        return Err(TokenizerError::DimensionMismatch { expected: p.len(), got: q.len() });
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let mut js = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        let term = |v: f64| if v > 0.0 { v * (v / m).log2() } else { 0.0 };
        // Summing the pair before accumulating keeps the result exactly symmetric.
        js += 0.5 * (term(a) + term(b));
    }
    Ok(js.clamp(0.0, 1.0))
}
