use serde::{Deserialize, Serialize};

use super::TokenizerError;
use crate::dataset::{SensorStream, CHANNELS};
use crate::signal::Signal;

/// Fixed-length chunk layout over one interval of a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkGrid {
    pub chunk_len: usize,
    pub hop: usize,
    /// Number of samples in the chunked interval.
    pub len: usize,
    /// Chunk start indices relative to the interval start.
    pub starts: Vec<usize>,
    pub missing_fraction: Vec<f64>,
}

impl ChunkGrid {
    /// Layout for `len` samples; no chunks when `len < chunk_len`.
    pub fn new(len: usize, chunk_len: usize, hop: usize) -> Self {
        let count = if len < chunk_len { 0 } else { (len - chunk_len) / hop + 1 };
        Self {
            chunk_len,
            hop,
            len,
            starts: (0..count).map(|m| m * hop).collect(),
            missing_fraction: vec![0.0; count],
        }
    }

    pub fn count(&self) -> usize {
        self.starts.len()
    }
}

/// One `chunk_len × C` window; masked entries hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub data: Signal,
    pub mask: Vec<bool>,
    pub missing_fraction: f64,
}

impl Chunk {
    pub fn new(data: Signal, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), data.as_slice().len(), "mask shape");
        let missing = mask.iter().filter(|&&m| m).count();
        let missing_fraction = if mask.is_empty() { 0.0 } else { missing as f64 / mask.len() as f64 };
        Self { data, mask, missing_fraction }
    }

    /// A chunk with no missing entries.
    pub fn complete(data: Signal) -> Self {
        let n = data.as_slice().len();
        Self::new(data, vec![false; n])
    }
}

/// Samples per chunk and hop for a window of `window_s` seconds.
pub fn chunk_geometry(window_s: f64, overlap: f64, sample_rate_hz: f64) -> Result<(usize, usize), TokenizerError> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(TokenizerError::InvalidParams(format!("overlap {overlap} outside [0, 1)")));
    }
    if !(window_s * sample_rate_hz >= 2.0) {
        return Err(TokenizerError::InvalidParams(format!(
            "window of {window_s} s at {sample_rate_hz} Hz spans fewer than 2 samples"
        )));
    }
    let chunk_len = (window_s * sample_rate_hz).round() as usize;
    let hop = ((chunk_len as f64 * (1.0 - overlap)).round() as usize).max(1);
    Ok((chunk_len, hop))
}

/// Cuts a signal and its mask into chunks.
pub fn chunk_signal(x: &Signal, mask: &[bool], chunk_len: usize, hop: usize) -> (ChunkGrid, Vec<Chunk>) {
    let c = x.channels();
    let mut grid = ChunkGrid::new(x.len(), chunk_len, hop);
    let chunks: Vec<Chunk> = grid
        .starts
        .iter()
        .map(|&s| Chunk::new(x.slice_rows(s, s + chunk_len), mask[s * c..(s + chunk_len) * c].to_vec()))
        .collect();
    grid.missing_fraction = chunks.iter().map(|ch| ch.missing_fraction).collect();
    (grid, chunks)
}

/// Samples and mask of `stream` over `[start_s, end_s)`.
pub fn interval(stream: &SensorStream, start_s: f64, end_s: f64) -> (Signal, Vec<bool>) {
    let (lo, hi) = stream.index_range(start_s, end_s);
    (stream.samples().slice_rows(lo, hi), stream.mask()[lo * CHANNELS..hi * CHANNELS].to_vec())
}

/// Chunks the interval `[start_s, end_s)` of a stream.
pub fn chunk(
    stream: &SensorStream,
    start_s: f64,
    end_s: f64,
    window_s: f64,
    overlap: f64,
) -> Result<(ChunkGrid, Vec<Chunk>), TokenizerError> {
    let (chunk_len, hop) = chunk_geometry(window_s, overlap, stream.sample_rate_hz)?;
    let (x, mask) = interval(stream, start_s, end_s);
    Ok(chunk_signal(&x, &mask, chunk_len, hop))
}
