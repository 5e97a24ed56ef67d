//! Short-time Fourier and continuous wavelet transforms.
//!
//! For a real sequence `x` of length `T`, window `w` of length `L` and hop `H`:
//!
//! ```text
//! STFT(τ, ω_k) = Σ_{t=0}^{L-1} x(t + τH) · w(t) · e^{-j ω_k t},   ω_k = 2πk / L,  k = 0..=⌊L/2⌋
//! CWT(a, b)    = | a^{-1/2} · Σ_{|t-b| ≤ 4a} x(t) · ψ*((t - b) / a) |
//! ```
//!
//! giving `⌊L/2⌋ + 1` bins by `⌊(T - L)/H⌋ + 1` frames for the STFT and a
//! `|scales| × T` magnitude map for the CWT. No normalization is applied to
//! either transform. The wavelet sum is truncated at a support radius of
//! `4a` samples, where both supported wavelets have decayed below `e^{-8}`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Signal;

/// Truncation radius of the wavelet sum, in units of the scale.
pub const SUPPORT_RADIUS: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("window length {window} exceeds signal length {signal}")]
    WindowTooLong { window: usize, signal: usize },
    #[error("window length must be at least 1")]
    EmptyWindow,
    #[error("hop must be at least 1")]
    ZeroHop,
    #[error("scale list is empty")]
    EmptyScales,
    #[error("scale {0} is not a positive finite number")]
    BadScale(f64),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFn {
    Rectangular,
    #[default]
    Hamming,
    Hann,
}

impl WindowFn {
    /// Symmetric window coefficients of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        if len == 1 {
            return vec![1.0];
        }
        let denom = (len - 1) as f64;
        (0..len)
            .map(|n| {
                let phase = 2.0 * PI * n as f64 / denom;
                match self {
                    WindowFn::Rectangular => 1.0,
                    WindowFn::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowFn::Hann => 0.5 - 0.5 * phase.cos(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftParams {
    pub window_len: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: WindowFn,
}

impl StftParams {
    /// Hamming window of length `window_len` with half-window hop.
    pub fn hamming(window_len: usize) -> Self {
        Self { window_len, hop: (window_len / 2).max(1), window: WindowFn::Hamming }
    }

    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Frames for a signal of length `len` (zero when the window does not fit).
    pub fn frames(&self, len: usize) -> usize {
        if len < self.window_len || self.hop == 0 {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }
}

/// Time-frequency map of shape `channels × bins × frames`, stored with the
/// frame index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    pub channels: usize,
    pub bins: usize,
    pub frames: usize,
    pub values: Vec<T>,
    /// STFT: bin frequency in cycles per sample. CWT: the scales.
    pub axis: Vec<f64>,
    /// Sample index at which each frame starts (CWT: the translation `b`).
    pub frame_starts: Vec<usize>,
    pub descriptor: String,
}

impl<T: Copy> Spectrogram<T> {
    pub fn get(&self, channel: usize, bin: usize, frame: usize) -> T {
        self.values[(channel * self.bins + bin) * self.frames + frame]
    }
}

/// A prepared STFT for fixed parameters; reusable across signals.
pub struct StftPlan {
    params: StftParams,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan").field("params", &self.params).finish()
    }
}

impl StftPlan {
    pub fn new(params: StftParams) -> Result<Self, SpectralError> {
        if params.window_len == 0 {
            return Err(SpectralError::EmptyWindow);
        }
        if params.hop == 0 {
            return Err(SpectralError::ZeroHop);
        }
        let fft = FftPlanner::new().plan_fft_forward(params.window_len);
        Ok(Self { window: params.window.coefficients(params.window_len), params, fft })
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    /// Complex coefficients `bins × frames` of one channel, frame index fastest.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<Complex64>, SpectralError> {
        let l = self.params.window_len;
        if l > x.len() {
            return Err(SpectralError::WindowTooLong { window: l, signal: x.len() });
        }
        let frames = self.params.frames(x.len());
        let bins = self.params.bins();
        let mut out = vec![Complex64::new(0.0, 0.0); bins * frames];
        let mut buf = vec![Complex64::new(0.0, 0.0); l];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for tau in 0..frames {
            let start = tau * self.params.hop;
            for (t, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(x[start + t] * self.window[t], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..bins {
                out[k * frames + tau] = buf[k];
            }
        }
        Ok(out)
    }

    /// Magnitudes `bins × frames` of one channel.
    pub fn magnitudes(&self, x: &[f64]) -> Result<Vec<f64>, SpectralError> {
        Ok(self.transform(x)?.into_iter().map(|z| z.norm()).collect())
    }
}

/// STFT of a single real sequence.
pub fn stft(signal: &[f64], params: &StftParams) -> Result<Spectrogram<Complex64>, SpectralError> {
    let plan = StftPlan::new(*params)?;
    let values = plan.transform(signal)?;
    Ok(stft_spectrogram(1, values, params, signal.len()))
}

/// Channel-wise STFT of a multichannel signal. Non-finite samples are treated as zero.
pub fn stft_multi(signal: &Signal, params: &StftParams) -> Result<Spectrogram<Complex64>, SpectralError> {
    let plan = StftPlan::new(*params)?;
    let filled = signal.zero_filled();
    let mut values = Vec::new();
    for c in 0..signal.channels() {
        values.extend(plan.transform(&filled.channel(c))?);
    }
    Ok(stft_spectrogram(signal.channels(), values, params, signal.len()))
}

fn stft_spectrogram(channels: usize, values: Vec<Complex64>, p: &StftParams, len: usize) -> Spectrogram<Complex64> {
    let frames = p.frames(len);
    Spectrogram {
        channels,
        bins: p.bins(),
        frames,
        values,
        axis: (0..p.bins()).map(|k| k as f64 / p.window_len as f64).collect(),
        frame_starts: (0..frames).map(|f| f * p.hop).collect(),
        descriptor: format!("stft/{:?}/L={}/H={}", p.window, p.window_len, p.hop).to_lowercase(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Wavelet {
    Morlet { omega0: f64 },
    Ricker,
}

impl Default for Wavelet {
    fn default() -> Self {
        Wavelet::Morlet { omega0: 6.0 }
    }
}

impl Wavelet {
    /// Mother wavelet evaluated at `t`.
    pub fn psi(self, t: f64) -> Complex64 {
        let gauss = (-0.5 * t * t).exp();
        match self {
            Wavelet::Morlet { omega0 } => Complex64::from_polar(PI.powf(-0.25) * gauss, omega0 * t),
            Wavelet::Ricker => {
                let norm = 2.0 / (3.0f64.sqrt() * PI.powf(0.25));
                Complex64::new(norm * (1.0 - t * t) * gauss, 0.0)
            }
        }
    }

    /// Scale (in samples) whose wavelet is centred on `freq_hz`.
    pub fn scale_for_frequency(self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        match self {
            Wavelet::Morlet { omega0 } => omega0 * sample_rate_hz / (2.0 * PI * freq_hz),
            Wavelet::Ricker => 2f64.sqrt() * sample_rate_hz / (2.0 * PI * freq_hz),
        }
    }
}

/// `n` scales whose centre frequencies are log-spaced over `[f_min, f_max]` Hz,
/// ordered from the highest frequency (smallest scale) down.
pub fn log_spaced_scales(wavelet: Wavelet, sample_rate_hz: f64, f_min: f64, f_max: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let frac = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            let f = f_max * (f_min / f_max).powf(frac);
            wavelet.scale_for_frequency(f, sample_rate_hz)
        })
        .collect()
}

/// Precomputed wavelet kernels for a fixed signal length and scale list.
///
/// Long kernels are applied as a zero-padded FFT convolution, short ones as
/// direct sums; both compute the same truncated sum.
#[derive(Clone)]
pub struct CwtPlan {
    len: usize,
    scales: Vec<f64>,
    /// Per scale: support radius and the conjugated, `a^{-1/2}`-weighted kernel
    /// over offsets `-r..=r` as separate real and imaginary parts.
    kernels: Vec<(usize, Vec<f64>, Vec<f64>)>,
    fft: Option<FftConvolution>,
}

#[derive(Clone)]
struct FftConvolution {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Spectrum of the reversed kernel per scale, pre-divided by `size`.
    spectra: Vec<Vec<Complex64>>,
}

impl std::fmt::Debug for CwtPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CwtPlan").field("len", &self.len).field("scales", &self.scales).finish()
    }
}

impl CwtPlan {
    pub fn new(scales: &[f64], wavelet: Wavelet, len: usize) -> Result<Self, SpectralError> {
        if scales.is_empty() {
            return Err(SpectralError::EmptyScales);
        }
        if let Some(&bad) = scales.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(SpectralError::BadScale(bad));
        }
        let kernels: Vec<(usize, Vec<f64>, Vec<f64>)> = scales
            .iter()
            .map(|&a| {
                let r = ((SUPPORT_RADIUS * a).floor() as usize).min(len.saturating_sub(1));
                let norm = a.sqrt().recip();
                let (re, im): (Vec<f64>, Vec<f64>) = (-(r as i64)..=r as i64)
                    .map(|d| {
                        let z = wavelet.psi(d as f64 / a).conj() * norm;
                        (z.re, z.im)
                    })
                    .unzip();
                (r, re, im)
            })
            .collect();
        let r_max = kernels.iter().map(|k| k.0).max().unwrap_or(0);
        let size = (len + r_max).next_power_of_two();
        let direct_cost: usize = kernels.iter().map(|k| len * (2 * k.0 + 1)).sum();
        let fft_cost = (kernels.len() + 1) * size * (size.trailing_zeros() as usize + 1) * 2;
        let fft = (len > 0 && direct_cost > fft_cost).then(|| {
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(size);
            let inverse = planner.plan_fft_inverse(size);
            let spectra = kernels
                .iter()
                .map(|(r, re, im)| {
                    // out[b] = Σ_t x[t] g[t - b] is a convolution with h[j] = g[-j].
                    let mut h = vec![Complex64::new(0.0, 0.0); size];
                    for (k, (&kr, &ki)) in re.iter().zip(im).enumerate() {
                        let j = *r as i64 - k as i64;
                        h[j.rem_euclid(size as i64) as usize] = Complex64::new(kr, ki) / size as f64;
                    }
                    forward.process(&mut h);
                    h
                })
                .collect();
            FftConvolution { size, forward, inverse, spectra }
        });
        Ok(Self { len, scales: scales.to_vec(), kernels, fft })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Coefficient magnitudes `|scales| × T`, translation index fastest.
    /// Panics if `x.len()` differs from the planned length.
    pub fn magnitudes(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.len, "signal length differs from the planned length");
        let n = self.len;
        let mut out = Vec::with_capacity(self.scales.len() * n);
        if let Some(f) = &self.fft {
            let mut xs: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            xs.resize(f.size, Complex64::new(0.0, 0.0));
            f.forward.process(&mut xs);
            let mut buf = vec![Complex64::new(0.0, 0.0); f.size];
            for spectrum in &f.spectra {
                for ((b, xv), hv) in buf.iter_mut().zip(&xs).zip(spectrum) {
                    *b = xv * hv;
                }
                f.inverse.process(&mut buf);
                out.extend(buf[..n].iter().map(|z| z.norm()));
            }
            return out;
        }
        for (r, re, im) in &self.kernels {
            let r = *r;
            for b in 0..n {
                let lo = b.saturating_sub(r);
                let hi = (b + r).min(n - 1);
                let (mut acc_re, mut acc_im) = (0.0, 0.0);
                for t in lo..=hi {
                    let k = t + r - b;
                    acc_re += x[t] * re[k];
                    acc_im += x[t] * im[k];
                }
                out.push(acc_re.hypot(acc_im));
            }
        }
        out
    }
}

/// CWT magnitudes of a single real sequence.
pub fn cwt(signal: &[f64], scales: &[f64], wavelet: Wavelet) -> Result<Spectrogram<f64>, SpectralError> {
    let plan = CwtPlan::new(scales, wavelet, signal.len())?;
    Ok(Spectrogram {
        channels: 1,
        bins: scales.len(),
        frames: signal.len(),
        values: plan.magnitudes(signal),
        axis: scales.to_vec(),
        frame_starts: (0..signal.len()).collect(),
        descriptor: format!("cwt/{wavelet:?}").to_lowercase(),
    })
}

fn check_same_shape(x: &Signal, y: &Signal) -> Result<(), SpectralError> {
    if x.shape() != y.shape() {
        return Err(SpectralError::ShapeMismatch(x.shape(), y.shape()));
    }
    Ok(())
}

/// Sum and count of `| |STFT(x)| - |STFT(y)| |` over every (channel, bin, frame).
pub fn spectral_l1_parts(x: &Signal, y: &Signal, plan: &StftPlan) -> Result<(f64, usize), SpectralError> {
    check_same_shape(x, y)?;
    let (xf, yf) = (x.zero_filled(), y.zero_filled());
    let mut sum = 0.0;
    let mut count = 0;
    for c in 0..x.channels() {
        let a = plan.magnitudes(&xf.channel(c))?;
        let b = plan.magnitudes(&yf.channel(c))?;
        sum += a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>();
        count += a.len();
    }
    Ok((sum, count))
}

/// Mean absolute difference of STFT magnitudes. Non-finite samples count as zero.
pub fn spectral_l1(x: &Signal, y: &Signal, params: &StftParams) -> Result<f64, SpectralError> {
    let plan = StftPlan::new(*params)?;
    let (sum, count) = spectral_l1_parts(x, y, &plan)?;
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Sum and count of `| |CWT(x)| - |CWT(y)| |` over every (channel, scale, translation).
pub fn wavelet_l1_parts(x: &Signal, y: &Signal, scales: &[f64], wavelet: Wavelet) -> Result<(f64, usize), SpectralError> {
    check_same_shape(x, y)?;
    let plan = CwtPlan::new(scales, wavelet, x.len())?;
    let (xf, yf) = (x.zero_filled(), y.zero_filled());
    let mut sum = 0.0;
    let mut count = 0;
    for c in 0..x.channels() {
        let a = plan.magnitudes(&xf.channel(c));
        let b = plan.magnitudes(&yf.channel(c));
        sum += a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>();
        count += a.len();
    }
    Ok((sum, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_signal_rectangular_window() {
        let p = StftParams { window_len: 4, hop: 4, window: WindowFn::Rectangular };
        let s = stft(&[1.0; 4], &p).unwrap();
        assert_eq!((s.bins, s.frames), (3, 1));
        assert!((s.get(0, 0, 0).norm() - 4.0).abs() < 1e-12);
        assert!(s.get(0, 1, 0).norm() < 1e-12);
        assert!(s.get(0, 2, 0).norm() < 1e-12);
    }

    #[test]
    fn fft_and_direct_paths_agree() {
        let n = 200;
        let x: Vec<f64> = (0..n).map(|t| (t as f64 * 0.37).sin() + 0.1 * (t % 7) as f64).collect();
        let scales = [0.8, 3.0, 20.0, 60.0];
        let plan = CwtPlan::new(&scales, Wavelet::default(), n).unwrap();
        assert!(plan.fft.is_some());
        let got = plan.magnitudes(&x);
        for (si, &a) in scales.iter().enumerate() {
            let r = ((SUPPORT_RADIUS * a).floor() as i64).min(n as i64 - 1);
            for b in 0..n as i64 {
                let mut acc = Complex64::new(0.0, 0.0);
                for t in (b - r).max(0)..=(b + r).min(n as i64 - 1) {
                    acc += Wavelet::default().psi((t - b) as f64 / a).conj() * x[t as usize] / a.sqrt();
                }
                let g = got[si * n + b as usize];
                assert!((g - acc.norm()).abs() <= 1e-10 * (1.0 + acc.norm()), "scale {a} b {b}");
            }
        }
    }

    #[test]
    fn zero_signal_gives_zero_maps() {
        let s = stft(&[0.0; 32], &StftParams::hamming(8)).unwrap();
        assert!(s.values.iter().all(|z| z.norm() == 0.0));
        let w = cwt(&[0.0; 32], &[1.0, 2.0], Wavelet::default()).unwrap();
        assert!(w.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_count_and_errors() {
        let p = StftParams { window_len: 8, hop: 3, window: WindowFn::Hann };
        assert_eq!(stft(&[0.0; 20], &p).unwrap().frames, (20 - 8) / 3 + 1);
        assert_eq!(stft(&[0.0; 4], &p).unwrap_err(), SpectralError::WindowTooLong { window: 8, signal: 4 });
        assert_eq!(stft(&[0.0; 4], &StftParams { hop: 0, ..p }).unwrap_err(), SpectralError::ZeroHop);
        assert_eq!(cwt(&[0.0; 4], &[], Wavelet::Ricker).unwrap_err(), SpectralError::EmptyScales);
        assert!(matches!(cwt(&[0.0; 4], &[-1.0], Wavelet::Ricker), Err(SpectralError::BadScale(_))));
    }

    #[test]
    fn impulse_response_of_ricker() {
        let t0 = 20usize;
        let mut x = vec![0.0; 48];
        x[t0] = 1.0;
        let a = 3.0;
        let w = cwt(&x, &[a], Wavelet::Ricker).unwrap();
        for b in 0..x.len() {
            let d = t0 as f64 - b as f64;
            let expected = if d.abs() <= 4.0 * a { Wavelet::Ricker.psi(d / a).re.abs() / a.sqrt() } else { 0.0 };
            assert!((w.get(0, 0, b) - expected).abs() < 1e-12, "b={b}");
        }
    }

    #[test]
    fn spectral_l1_cases() {
        let p = StftParams { window_len: 4, hop: 4, window: WindowFn::Rectangular };
        let ones = Signal::from_vec(4, 1, vec![1.0; 4]).unwrap();
        let zeros = Signal::zeros(4, 1);
        assert_eq!(spectral_l1(&ones, &ones, &p).unwrap(), 0.0);
        // |STFT| of the constant is (4, 0, 0).
        assert!((spectral_l1(&ones, &zeros, &p).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(spectral_l1(&ones, &zeros, &p).unwrap(), spectral_l1(&zeros, &ones, &p).unwrap());
        assert!(spectral_l1(&ones, &Signal::zeros(5, 1), &p).is_err());
    }

    #[test]
    fn morlet_scales_track_frequency() {
        let w = Wavelet::default();
        let scales = log_spaced_scales(w, 30.0, 0.5, 8.0, 8);
        assert_eq!(scales.len(), 8);
        assert!((scales[0] - 6.0 * 30.0 / (2.0 * PI * 8.0)).abs() < 1e-12);
        assert!((scales[7] - 6.0 * 30.0 / (2.0 * PI * 0.5)).abs() < 1e-9);
        assert!(scales.windows(2).all(|s| s[1] > s[0]));
    }
}
