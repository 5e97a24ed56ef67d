//! Sensor-language alignment by retrieval. Segments are embedded from their
//! token sequences, descriptions from hashed character n-grams, and a ridge
//! map sends segment embeddings into text space where candidates are ranked
//! by cosine similarity.

pub mod ridge;
pub mod segment;
pub mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ridge::{fit_alignment, rank_scores, score_projected, AlignmentMap, Ranked, Score};
pub use segment::{Document, SegmentEncoder, SegmentFeatureParams, SparseVec};
pub use text::{cosine, embed_text, normalize_text, TextEmbedding};

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("segment has no tokens at any position")]
    EmptySegment,
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn d_lambda() -> f64 {
    1.0
}
fn d_text_dim() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignParams {
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_text_dim")]
    pub text_dim: usize,
    #[serde(default)]
    pub segment: SegmentFeatureParams,
    /// Also train on each multi-position segment seen through one position
    /// at a time, so single-sensor queries match a training input format.
    #[serde(default)]
    pub single_position_pairs: bool,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self { lambda: d_lambda(), text_dim: d_text_dim(), segment: SegmentFeatureParams::default(), single_position_pairs: false }
    }
}
