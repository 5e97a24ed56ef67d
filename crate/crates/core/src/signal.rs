//! Dense row-major `T × C` matrices of samples.

/// A multichannel signal stored row-major: sample `t`, channel `c` lives at
/// `data[t * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    len: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Signal {
    pub fn zeros(len: usize, channels: usize) -> Self {
        Self { len, channels, data: vec![0.0; len * channels] }
    }

    /// Wraps row-major data. Returns `None` when `data.len() != len * channels`.
    pub fn from_vec(len: usize, channels: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == len * channels).then_some(Self { len, channels, data })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.len, self.channels)
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, t: usize, c: usize, v: f64) {
        self.data[t * self.channels + c] = v;
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.channels..(t + 1) * self.channels]
    }

    /// Copies one channel out as a contiguous vector.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.len).map(|t| self.get(t, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rows `start..end` as a new signal.
    pub fn slice_rows(&self, start: usize, end: usize) -> Signal {
        Signal {
            len: end - start,
            channels: self.channels,
            data: self.data[start * self.channels..end * self.channels].to_vec(),
        }
    }

    /// Copy with every non-finite sample replaced by zero.
    pub fn zero_filled(&self) -> Signal {
        Signal {
            len: self.len,
            channels: self.channels,
            data: self.data.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect(),
        }
    }
}
