//! Three-view chunk features: standardized time samples, STFT log-magnitude
//! and CWT magnitude, followed by the chunk's missing fraction.

use serde::{Deserialize, Serialize};

use super::chunk::Chunk;
use super::TokenizerError;
use crate::spectral::{log_spaced_scales, CwtPlan, StftParams, StftPlan, Wavelet, WindowFn};

/// Floor applied to STFT magnitudes before the logarithm.
pub const LOG_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Views {
    pub time: bool,
    pub stft: bool,
    pub cwt: bool,
}

impl Default for Views {
    fn default() -> Self {
        Self { time: true, stft: true, cwt: true }
    }
}

impl Views {
    pub const TIME_ONLY: Views = Views { time: true, stft: false, cwt: false };

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.time {
            parts.push("time");
        }
        if self.stft {
            parts.push("stft");
        }
        if self.cwt {
            parts.push("cwt");
        }
        parts.join("+")
    }

    /// Inverse of [`Views::label`]: `time`, `stft`, `cwt` joined by `+`.
    pub fn parse(text: &str) -> Option<Views> {
        let mut v = Views { time: false, stft: false, cwt: false };
        for part in text.split('+') {
            let flag = match part.trim() {
                "time" => &mut v.time,
                "stft" => &mut v.stft,
                "cwt" => &mut v.cwt,
                _ => return None,
            };
            if *flag {
                return None;
            }
            *flag = true;
        }
        Some(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwtParams {
    #[serde(default)]
    pub wavelet: Wavelet,
    pub n_scales: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
}

impl Default for CwtParams {
    fn default() -> Self {
        Self { wavelet: Wavelet::default(), n_scales: 8, f_min_hz: 0.5, f_max_hz: 8.0 }
    }
}

/// Per-channel mean and standard deviation over unmasked training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    #[serde(with = "crate::util::sig9")]
    pub mean: Vec<f64>,
    #[serde(with = "crate::util::sig9")]
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    /// Fits on every unmasked entry of `chunks`. Channels with zero spread get
    /// unit scale.
    pub fn fit<'a>(chunks: impl IntoIterator<Item = &'a Chunk>, channels: usize) -> Self {
        let mut n = vec![0usize; channels];
        let mut mean = vec![0.0; channels];
        let mut m2 = vec![0.0; channels];
        for ch in chunks {
            for t in 0..ch.data.len() {
                for c in 0..channels {
                    if ch.mask[t * channels + c] {
                        continue;
                    }
                    let v = ch.data.get(t, c);
                    n[c] += 1;
                    let delta = v - mean[c];
                    mean[c] += delta / n[c] as f64;
                    m2[c] += delta * (v - mean[c]);
                }
            }
        }
        let std = (0..channels)
            .map(|c| {
                let s = if n[c] > 0 { (m2[c] / n[c] as f64).sqrt() } else { 0.0 };
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }
}

/// Which slice of a raw feature vector belongs to which view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub time: usize,
    pub stft: usize,
    pub cwt: usize,
}

impl FeatureLayout {
    pub fn dim(&self) -> usize {
        self.time + self.stft + self.cwt + 1
    }

    /// Index ranges of the time, STFT and CWT blocks.
    pub fn blocks(&self) -> [std::ops::Range<usize>; 3] {
        let a = self.time;
        let b = a + self.stft;
        [0..a, a..b, b..b + self.cwt]
    }
}

/// Fold-independent part of a chunk's features: the two spectral views,
/// computed on the zero-filled raw chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFeatures {
    pub stft: Vec<f64>,
    pub cwt: Vec<f64>,
}

/// Prepared transforms for a fixed chunk length.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    chunk_len: usize,
    channels: usize,
    views: Views,
    stft: Option<std::sync::Arc<StftPlan>>,
    cwt: Option<CwtPlan>,
    layout: FeatureLayout,
}

impl FeatureExtractor {
    pub fn new(
        chunk_len: usize,
        channels: usize,
        sample_rate_hz: f64,
        views: Views,
        window: WindowFn,
        cwt: &CwtParams,
    ) -> Result<Self, TokenizerError> {
        let stft_params = StftParams { window_len: chunk_len, hop: (chunk_len / 2).max(1), window };
        let stft = if views.stft { Some(std::sync::Arc::new(StftPlan::new(stft_params)?)) } else { None };
        let cwt_plan = if views.cwt {
            let scales = log_spaced_scales(cwt.wavelet, sample_rate_hz, cwt.f_min_hz, cwt.f_max_hz, cwt.n_scales);
            Some(CwtPlan::new(&scales, cwt.wavelet, chunk_len)?)
        } else {
            None
        };
        let layout = FeatureLayout {
            time: if views.time { channels * chunk_len } else { 0 },
            stft: if views.stft { channels * stft_params.bins() * stft_params.frames(chunk_len) } else { 0 },
            cwt: if views.cwt { channels * cwt.n_scales * chunk_len } else { 0 },
        };
        Ok(Self { chunk_len, channels, views, stft, cwt: cwt_plan, layout })
    }

    pub fn layout(&self) -> FeatureLayout {
        self.layout
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    fn check(&self, chunk: &Chunk) -> Result<(), TokenizerError> {
        let want = (self.chunk_len, self.channels);
        if chunk.data.shape() != want {
            return Err(TokenizerError::ShapeMismatch { expected: want, got: chunk.data.shape() });
        }
        Ok(())
    }

    pub fn spectral(&self, chunk: &Chunk) -> Result<SpectralFeatures, TokenizerError> {
        self.check(chunk)?;
        let filled = chunk.data.zero_filled();
        let mut stft = Vec::with_capacity(self.layout.stft);
        let mut cwt = Vec::with_capacity(self.layout.cwt);
        for c in 0..self.channels {
            let x = filled.channel(c);
            if let Some(plan) = &self.stft {
                stft.extend(plan.magnitudes(&x)?.into_iter().map(|m| m.max(LOG_FLOOR).ln()));
            }
            if let Some(plan) = &self.cwt {
                cwt.extend(plan.magnitudes(&x));
            }
        }
        Ok(SpectralFeatures { stft, cwt })
    }

    /// Assembles the full raw vector from cached spectral views.
    pub fn assemble(&self, chunk: &Chunk, spectral: &SpectralFeatures, stats: &ChannelStats) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout.dim());
        if self.views.time {
            for c in 0..self.channels {
                for t in 0..self.chunk_len {
                    let v = if chunk.mask[t * self.channels + c] {
                        0.0
                    } else {
                        (chunk.data.get(t, c) - stats.mean[c]) / stats.std[c]
                    };
                    out.push(v);
                }
            }
        }
        out.extend_from_slice(&spectral.stft);
        out.extend_from_slice(&spectral.cwt);
        out.push(chunk.missing_fraction);
        out
    }

    pub fn featurize(&self, chunk: &Chunk, stats: &ChannelStats) -> Result<Vec<f64>, TokenizerError> {
        let spectral = self.spectral(chunk)?;
        Ok(self.assemble(chunk, &spectral, stats))
    }
}

/// Rescales each view block to unit total variance so that no view dominates
/// the fused projection by dimension count alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockScaling {
    pub layout: FeatureLayout,
    #[serde(with = "crate::util::sig9")]
    pub weights: Vec<f64>,
}

impl BlockScaling {
    pub fn identity(layout: FeatureLayout) -> Self {
        Self { layout, weights: vec![1.0; 3] }
    }

    pub fn fit(layout: FeatureLayout, rows: &[Vec<f64>]) -> Self {
        let n = rows.len().max(1) as f64;
        let weights = layout
            .blocks()
            .into_iter()
            .map(|range| {
                let mut total = 0.0;
                for j in range {
                    let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
                    total += rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                }
                if total > 0.0 && total.is_finite() {
                    total.sqrt().recip()
                } else {
                    1.0
                }
            })
            .collect();
        Self { layout, weights }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for (range, &w) in self.layout.blocks().into_iter().zip(&self.weights) {
            for v in &mut x[range] {
                *v *= w;
            }
        }
    }
}
