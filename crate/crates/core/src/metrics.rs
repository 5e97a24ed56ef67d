//! Retrieval and classification metrics.
//!
//! A query is described by its ranking (candidate indices, best first) and a
//! relevance grade per candidate index: 2 for an exact description match, 1
//! for the same activity class, 0 otherwise. Recall and MRR use grade 2 as
//! binary relevance; nDCG uses the grades with gain `2^rel − 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no queries or predictions to score")]
    Empty,
    #[error("K must be at least 1")]
    ZeroK,
    #[error("every query was excluded: {0}")]
    AllExcluded(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedQuery {
    pub ranking: Vec<usize>,
    pub grades: Vec<u8>,
}

impl RankedQuery {
    /// 1-based rank of the first candidate with grade 2.
    pub fn first_relevant(&self) -> Option<usize> {
        self.ranking.iter().position(|&c| self.grades[c] == 2).map(|r| r + 1)
    }
}

/// A metric value with the number of excluded queries and any notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub excluded: usize,
    pub warnings: Vec<String>,
}

impl MetricValue {
    fn clean(value: f64) -> Self {
        Self { value, excluded: 0, warnings: Vec::new() }
    }
}

fn clamp_k(queries: &[RankedQuery], k: usize, warnings: &mut Vec<String>) -> Result<(), MetricError> {
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    if queries.is_empty() {
        return Err(MetricError::Empty);
    }
    let smallest = queries.iter().map(|q| q.ranking.len()).min().unwrap_or(0);
    if k > smallest {
        warnings.push(format!("K={k} exceeds the pool size {smallest}; clamped"));
    }
    Ok(())
}

/// Fraction of queries with a grade-2 candidate within the top `k`.
pub fn recall_at_k(queries: &[RankedQuery], k: usize) -> Result<MetricValue, MetricError> {
    let mut warnings = Vec::new();
    clamp_k(queries, k, &mut warnings)?;
    let hits = queries.iter().filter(|q| q.first_relevant().is_some_and(|r| r <= k)).count();
    Ok(MetricValue { value: hits as f64 / queries.len() as f64, excluded: 0, warnings })
}

/// Mean reciprocal rank of the first grade-2 candidate. Queries without one
/// are excluded and counted.
pub fn mrr(queries: &[RankedQuery]) -> Result<MetricValue, MetricError> {
    if queries.is_empty() {
        return Err(MetricError::Empty);
    }
    let ranks: Vec<usize> = queries.iter().filter_map(RankedQuery::first_relevant).collect();
    let excluded = queries.len() - ranks.len();
    if ranks.is_empty() {
        return Err(MetricError::AllExcluded("no query has a relevant candidate".into()));
    }
    let value = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64;
    let warnings = if excluded > 0 { vec![format!("{excluded} queries without a relevant candidate excluded")] } else { vec![] };
    Ok(MetricValue { value, excluded, warnings })
}

fn dcg(grades: impl Iterator<Item = u8>) -> f64 {
    grades.enumerate().map(|(i, g)| ((1u32 << g) - 1) as f64 / ((i + 2) as f64).log2()).sum()
}

/// Mean nDCG@k. Queries whose grades are all zero are excluded and counted.
pub fn ndcg_at_k(queries: &[RankedQuery], k: usize) -> Result<MetricValue, MetricError> {
    let mut warnings = Vec::new();
    clamp_k(queries, k, &mut warnings)?;
    let mut sum = 0.0;
    let mut used = 0;
    for q in queries {
        if q.grades.iter().any(|&g| g > 2) {
            return Err(MetricError::InvalidInput("relevance grades must lie in {0, 1, 2}".into()));
        }
        let mut ideal = q.grades.clone();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg = dcg(ideal.into_iter().take(k));
        if idcg == 0.0 {
            continue;
        }
        sum += dcg(q.ranking.iter().take(k).map(|&c| q.grades[c])) / idcg;
        used += 1;
    }
    let excluded = queries.len() - used;
    if used == 0 {
        return Err(MetricError::AllExcluded("every query has all-zero relevance".into()));
    }
    if excluded > 0 {
        warnings.push(format!("{excluded} queries with all-zero relevance excluded"));
    }
    Ok(MetricValue { value: sum / used as f64, excluded, warnings })
}

pub fn accuracy<T: PartialEq>(preds: &[T], golds: &[T]) -> Result<MetricValue, MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::InvalidInput("predictions and golds differ in length".into()));
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let correct = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(MetricValue::clean(correct as f64 / preds.len() as f64))
}

/// Unweighted mean of per-class F1 over `classes`. Classes absent from both
/// predictions and golds are excluded and counted.
pub fn macro_f1<T: PartialEq>(preds: &[T], golds: &[T], classes: &[T]) -> Result<MetricValue, MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::InvalidInput("predictions and golds differ in length".into()));
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    if let Some(i) = golds.iter().position(|g| !classes.contains(g)) {
        return Err(MetricError::InvalidInput(format!("gold label {i} is outside the class set")));
    }
    let mut sum = 0.0;
    let mut used = 0;
    for c in classes {
        let tp = preds.iter().zip(golds).filter(|(p, g)| *p == c && *g == c).count();
        let fp = preds.iter().zip(golds).filter(|(p, g)| *p == c && *g != c).count();
        let fn_ = preds.iter().zip(golds).filter(|(p, g)| *p != c && *g == c).count();
        if tp + fp + fn_ == 0 {
            continue;
        }
        sum += 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        used += 1;
    }
    let excluded = classes.len() - used;
    let warnings = if excluded > 0 {
        vec![format!("{excluded} classes absent from predictions and golds excluded")]
    } else {
        vec![]
    };
    Ok(MetricValue { value: sum / used as f64, excluded, warnings })
}
