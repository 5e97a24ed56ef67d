//! Motion tokenizer: fixed-length chunks are described by three views
//! (standardized time samples, STFT log-magnitude, CWT magnitude), fused by a
//! PCA projection, and quantized against a shared k-means codebook. Tokens
//! decode back to time-domain signals through per-codeword chunk templates.

pub mod chunk;
pub mod codebook;
pub mod features;
pub mod metrics;
pub mod projection;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{chunk, chunk_geometry, chunk_signal, Chunk, ChunkGrid};
pub use codebook::{fit_codebook, fit_codewords, Codebook, FitInfo, TokenSequence};
pub use features::{BlockScaling, ChannelStats, CwtParams, FeatureExtractor, FeatureLayout, SpectralFeatures, Views};
pub use metrics::{js_divergence, time_l1, time_l1_parts, token_histogram};
pub use projection::{fit_projection, Projection};

use crate::dataset::{SensorStream, CHANNELS};
use crate::signal::Signal;
use crate::spectral::{log_spaced_scales, spectral_l1_parts, wavelet_l1_parts, SpectralError, StftParams, StftPlan, WindowFn};
use crate::util::{derive_seed, rng_from};

#[derive(Debug, Error, PartialEq)]
pub enum TokenizerError {
    #[error("invalid tokenizer parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("need more than d={d} feature vectors, got {n}")]
    TooFewFeatures { n: usize, d: usize },
    #[error("codebook size {k} exceeds the {n} available feature vectors")]
    TooFewPoints { k: usize, n: usize },
    #[error("codebook size {k} exceeds the {distinct} distinct feature vectors")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("token {token} outside 1..={k}")]
    TokenOutOfRange { token: u32, k: usize },
    #[error("every sample is masked")]
    AllMasked,
    #[error("no tokens to count")]
    EmptyTokens,
    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),
    #[error("codebook file: {0}")]
    Format(String),
}

fn d_k() -> usize {
    128
}
fn d_window() -> f64 {
    2.0
}
fn d_overlap() -> f64 {
    0.5
}
fn d_dim() -> usize {
    64
}
fn d_true() -> bool {
    true
}
fn d_iters() -> usize {
    100
}
fn d_missing() -> f64 {
    0.5
}
fn d_rows() -> usize {
    4000
}
fn d_beta() -> f64 {
    0.25
}
fn d_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerParams {
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default = "d_window")]
    pub window_s: f64,
    #[serde(default = "d_overlap")]
    pub overlap: f64,
    /// Fused feature dimension.
    #[serde(default = "d_dim")]
    pub d: usize,
    #[serde(default)]
    pub views: Views,
    #[serde(default)]
    pub stft_window: WindowFn,
    #[serde(default)]
    pub cwt: CwtParams,
    /// Rescale each view to unit total variance before fusion.
    #[serde(default = "d_true")]
    pub balance_views: bool,
    #[serde(default = "d_iters")]
    pub max_iters: usize,
    /// Chunks missing more than this fraction are left out of fitting.
    #[serde(default = "d_missing")]
    pub max_fit_missing: f64,
    /// Cap on the rows used to fit the projection (a seeded subsample).
    #[serde(default = "d_rows")]
    pub max_projection_rows: usize,
    /// Weights of the diagnostic loss
    /// `time + (1 + beta)·distortion + lambda_stft·stft + lambda_wav·wavelet`.
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_one")]
    pub lambda_stft: f64,
    #[serde(default = "d_one")]
    pub lambda_wav: f64,
}

impl Default for TokenizerParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl TokenizerParams {
    pub fn check(&self) -> Result<(), TokenizerError> {
        let bad = |m: String| Err(TokenizerError::InvalidParams(m));
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if !(self.views.time || self.views.stft || self.views.cwt) {
            return bad("at least one view must be enabled".into());
        }
        if !(0.0..=1.0).contains(&self.max_fit_missing) {
            return bad(format!("max_fit_missing {} outside [0, 1]", self.max_fit_missing));
        }
        if self.cwt.n_scales == 0 || !(self.cwt.f_min_hz > 0.0 && self.cwt.f_min_hz <= self.cwt.f_max_hz) {
            return bad("cwt scale range must be positive and ordered".into());
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad(format!("overlap {} outside [0, 1)", self.overlap));
        }
        Ok(())
    }

    pub fn extractor(&self, sample_rate_hz: f64) -> Result<FeatureExtractor, TokenizerError> {
        let (chunk_len, _) = chunk_geometry(self.window_s, self.overlap, sample_rate_hz)?;
        FeatureExtractor::new(chunk_len, CHANNELS, sample_rate_hz, self.views, self.stft_window, &self.cwt)
    }

    /// STFT used by the spectral reconstruction metric: one chunk-length window, half hop.
    pub fn metric_stft(&self, sample_rate_hz: f64) -> Result<StftParams, TokenizerError> {
        let (chunk_len, _) = chunk_geometry(self.window_s, self.overlap, sample_rate_hz)?;
        Ok(StftParams { window_len: chunk_len, hop: (chunk_len / 2).max(1), window: self.stft_window })
    }

    pub fn metric_scales(&self, sample_rate_hz: f64) -> Vec<f64> {
        log_spaced_scales(self.cwt.wavelet, sample_rate_hz, self.cwt.f_min_hz, self.cwt.f_max_hz, self.cwt.n_scales)
    }
}

/// The fold-specific, codebook-independent part of a tokenizer: channel
/// statistics, view scaling and the fusion projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEnd {
    pub stats: ChannelStats,
    pub scaling: BlockScaling,
    pub projection: Projection,
}

impl FrontEnd {
    /// Fits on `chunks` with their precomputed spectral views. Chunks above
    /// the missing-fraction cap are ignored.
    pub fn fit(
        params: &TokenizerParams,
        extractor: &FeatureExtractor,
        chunks: &[&Chunk],
        spectral: &[&SpectralFeatures],
        seed: u64,
    ) -> Result<Self, TokenizerError> {
        let eligible: Vec<usize> =
            (0..chunks.len()).filter(|&i| chunks[i].missing_fraction <= params.max_fit_missing).collect();
        let stats = ChannelStats::fit(eligible.iter().map(|&i| chunks[i]), CHANNELS);
        let mut rows: Vec<Vec<f64>> =
            eligible.iter().map(|&i| extractor.assemble(chunks[i], spectral[i], &stats)).collect();
        let scaling = if params.balance_views {
            BlockScaling::fit(extractor.layout(), &rows)
        } else {
            BlockScaling::identity(extractor.layout())
        };
        for r in &mut rows {
            scaling.apply(r);
        }
        if rows.len() > params.max_projection_rows {
            let mut rng = rng_from(derive_seed(seed, &[0x70_726f6a]));
            let mut picked = rand::seq::index::sample(&mut rng, rows.len(), params.max_projection_rows).into_vec();
            picked.sort_unstable();
            rows = picked.into_iter().map(|i| std::mem::take(&mut rows[i])).collect();
        }
        let projection = fit_projection(&rows, params.d)?;
        Ok(Self { stats, scaling, projection })
    }

    pub fn embed(&self, extractor: &FeatureExtractor, chunk: &Chunk, spectral: &SpectralFeatures) -> Vec<f64> {
        let mut raw = extractor.assemble(chunk, spectral, &self.stats);
        self.scaling.apply(&mut raw);
        self.projection.project(&raw).expect("extractor and projection share a layout")
    }
}

const FORMAT: &str = "narrate-codebook/1";

#[derive(Serialize, Deserialize)]
struct TokenizerFile {
    format: String,
    params: TokenizerParams,
    sample_rate_hz: f64,
    front_end: FrontEnd,
    codebook: Codebook,
}

/// Per-interval reconstruction diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReconstructionParts {
    pub time_sum: f64,
    pub time_count: usize,
    pub stft_sum: f64,
    pub stft_count: usize,
    pub wavelet_sum: f64,
    pub wavelet_count: usize,
}

impl ReconstructionParts {
    pub fn add(&mut self, o: &ReconstructionParts) {
        self.time_sum += o.time_sum;
        self.time_count += o.time_count;
        self.stft_sum += o.stft_sum;
        self.stft_count += o.stft_count;
        self.wavelet_sum += o.wavelet_sum;
        self.wavelet_count += o.wavelet_count;
    }

    fn mean(sum: f64, count: usize) -> f64 {
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    pub fn time_l1(&self) -> f64 {
        Self::mean(self.time_sum, self.time_count)
    }

    pub fn spectral_l1(&self) -> f64 {
        Self::mean(self.stft_sum, self.stft_count)
    }

    pub fn wavelet_l1(&self) -> f64 {
        Self::mean(self.wavelet_sum, self.wavelet_count)
    }
}

/// A fitted tokenizer.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    pub params: TokenizerParams,
    pub sample_rate_hz: f64,
    pub front_end: FrontEnd,
    pub codebook: Codebook,
    extractor: FeatureExtractor,
    hop: usize,
}

impl Tokenizer {
    pub fn from_parts(
        params: TokenizerParams,
        sample_rate_hz: f64,
        front_end: FrontEnd,
        codebook: Codebook,
    ) -> Result<Self, TokenizerError> {
        params.check()?;
        let extractor = params.extractor(sample_rate_hz)?;
        let (chunk_len, hop) = chunk_geometry(params.window_s, params.overlap, sample_rate_hz)?;
        if codebook.chunk_len != chunk_len || front_end.projection.input_dim() != extractor.layout().dim() {
            return Err(TokenizerError::Format("codebook does not match its parameters".into()));
        }
        Ok(Self { params, sample_rate_hz, front_end, codebook, extractor, hop })
    }

    /// Fits every stage on `chunks`, which must share the geometry implied by
    /// `params` at `sample_rate_hz`.
    pub fn fit(params: &TokenizerParams, sample_rate_hz: f64, chunks: &[Chunk], seed: u64) -> Result<Self, TokenizerError> {
        params.check()?;
        let extractor = params.extractor(sample_rate_hz)?;
        let spectral: Vec<SpectralFeatures> =
            chunks.iter().map(|c| extractor.spectral(c)).collect::<Result<_, _>>()?;
        let refs: Vec<&Chunk> = chunks.iter().collect();
        let spec_refs: Vec<&SpectralFeatures> = spectral.iter().collect();
        let front_end = FrontEnd::fit(params, &extractor, &refs, &spec_refs, seed)?;
        let (points, fit_chunks): (Vec<Vec<f64>>, Vec<&Chunk>) = chunks
            .iter()
            .zip(&spectral)
            .filter(|(c, _)| c.missing_fraction <= params.max_fit_missing)
            .map(|(c, s)| (front_end.embed(&extractor, c, s), c))
            .unzip();
        let codebook = fit_codebook(&points, &fit_chunks, params.k, params.max_iters, derive_seed(seed, &[1]))?;
        Self::from_parts(params.clone(), sample_rate_hz, front_end, codebook)
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn chunk_len(&self) -> usize {
        self.codebook.chunk_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn embed(&self, chunk: &Chunk) -> Result<Vec<f64>, TokenizerError> {
        let spectral = self.extractor.spectral(chunk)?;
        Ok(self.front_end.embed(&self.extractor, chunk, &spectral))
    }

    pub fn quantize_chunk(&self, chunk: &Chunk) -> Result<u32, TokenizerError> {
        self.codebook.quantize(&self.embed(chunk)?)
    }

    /// Chunks, embeds and quantizes a signal interval.
    pub fn tokenize_signal(&self, x: &Signal, mask: &[bool]) -> Result<(ChunkGrid, Vec<u32>), TokenizerError> {
        let (grid, chunks) = chunk_signal(x, mask, self.chunk_len(), self.hop);
        let tokens = chunks.iter().map(|c| self.quantize_chunk(c)).collect::<Result<_, _>>()?;
        Ok((grid, tokens))
    }

    pub fn tokenize(&self, stream: &SensorStream, start_s: f64, end_s: f64) -> Result<(ChunkGrid, TokenSequence), TokenizerError> {
        let (x, mask) = chunk::interval(stream, start_s, end_s);
        let (grid, tokens) = self.tokenize_signal(&x, &mask)?;
        let seq = TokenSequence { position: stream.position, tokens, starts: grid.starts.clone(), segment_id: None };
        Ok((grid, seq))
    }

    pub fn decode(&self, tokens: &[u32], grid: &ChunkGrid) -> Result<Signal, TokenizerError> {
        self.codebook.decode(tokens, grid)
    }

    /// Error sums of `decode(quantize(x))` against `x` in the time, STFT and
    /// CWT domains. Intervals shorter than one chunk contribute nothing.
    pub fn reconstruction(
        &self,
        x: &Signal,
        mask: &[bool],
        stft: &StftPlan,
        scales: &[f64],
        with_wavelet: bool,
    ) -> Result<ReconstructionParts, TokenizerError> {
        let (grid, tokens) = self.tokenize_signal(x, mask)?;
        if grid.count() == 0 {
            return Ok(ReconstructionParts::default());
        }
        let x_hat = self.decode(&tokens, &grid)?;
        let (time_sum, time_count) = time_l1_parts(x, &x_hat, Some(mask))?;
        let (stft_sum, stft_count) = spectral_l1_parts(x, &x_hat, stft)?;
        let (wavelet_sum, wavelet_count) = if with_wavelet {
            wavelet_l1_parts(x, &x_hat, scales, self.params.cwt.wavelet)?
        } else {
            (0.0, 0)
        };
        Ok(ReconstructionParts { time_sum, time_count, stft_sum, stft_count, wavelet_sum, wavelet_count })
    }

    /// Mean squared quantization error per fitted chunk.
    pub fn mean_distortion(&self) -> f64 {
        let n: usize = self.codebook.usage.iter().sum();
        if n == 0 {
            0.0
        } else {
            self.codebook.fit.final_distortion / n as f64
        }
    }

    /// Weighted diagnostic loss from reconstruction errors and codebook distortion.
    pub fn diagnostic_loss(&self, parts: &ReconstructionParts) -> f64 {
        parts.time_l1()
            + (1.0 + self.params.beta) * self.mean_distortion()
            + self.params.lambda_stft * parts.spectral_l1()
            + self.params.lambda_wav * parts.wavelet_l1()
    }

    pub fn to_json(&self) -> String {
        let file = TokenizerFile {
            format: FORMAT.to_string(),
            params: self.params.clone(),
            sample_rate_hz: self.sample_rate_hz,
            front_end: self.front_end.clone(),
            codebook: self.codebook.clone(),
        };
        serde_json::to_string_pretty(&file).expect("tokenizer serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TokenizerError> {
        let file: TokenizerFile = serde_json::from_str(text).map_err(|e| TokenizerError::Format(e.to_string()))?;
        if file.format != FORMAT {
            return Err(TokenizerError::Format(format!("unsupported format {}", file.format)));
        }
        Self::from_parts(file.params, file.sample_rate_hz, file.front_end, file.codebook)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Position;
    use crate::synth::{generate_corpus, CorpusConfig};

    #[test]
    fn default_params() {
        let p = TokenizerParams::default();
        assert_eq!((p.k, p.window_s, p.overlap, p.d), (128, 2.0, 0.5, 64));
        assert_eq!((p.beta, p.lambda_stft, p.lambda_wav), (0.25, 1.0, 1.0));
        assert!(p.views.time && p.views.stft && p.views.cwt);
    }

    #[test]
    fn fit_tokenize_and_serialize() {
        let (d, _) = generate_corpus(&CorpusConfig::new(2, 2, 6, 6, 4)).unwrap();
        let params = TokenizerParams { k: 8, d: 6, window_s: 1.0, ..TokenizerParams::default() };
        let mut chunks = Vec::new();
        for s in &d.sessions {
            for seg in &s.segments {
                let (_, mut c) = chunk(s.stream(Position::WristR).unwrap(), seg.start_s, seg.end_s, 1.0, 0.5).unwrap();
                chunks.append(&mut c);
            }
        }
        let tok = Tokenizer::fit(&params, 30.0, &chunks, 1).unwrap();
        assert_eq!(tok.codebook.usage.iter().sum::<usize>(), chunks.len());
        let seg = &d.sessions[0].segments[0];
        let stream = d.sessions[0].stream(Position::WristR).unwrap();
        let (grid, seq) = tok.tokenize(stream, seg.start_s, seg.end_s).unwrap();
        assert_eq!(seq.tokens.len(), grid.count());
        assert!(seq.tokens.iter().all(|&t| (1..=8).contains(&t)));

        let back = Tokenizer::from_json(&tok.to_json()).unwrap();
        let (_, again) = back.tokenize(stream, seg.start_s, seg.end_s).unwrap();
        assert_eq!(seq.tokens, again.tokens);
        assert_eq!(tok.to_json(), back.to_json());
    }
}
