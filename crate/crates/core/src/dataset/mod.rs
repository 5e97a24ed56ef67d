//! Data model for multi-position, variable-length, missingness-aware
//! annotated recordings, plus the on-disk format and evaluation splits.
//!
//! Missing samples are never imputed here: they carry `NaN` in the sample
//! matrix and `true` in the mask, and every consumer decides what to do.

mod io;
mod split;
mod validate;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Signal;

pub use io::{load_dataset, write_dataset, write_stream_csv, STREAM_HEADER};
pub use split::{make_splits, Fold, SegmentView, SplitMode, SplitSpec};
pub use validate::{validate, ValidationReport, Violation};

/// Channels per stream: 3-axis acceleration, 3-axis linear acceleration, 3-axis gyroscope.
pub const CHANNELS: usize = 9;

pub const CHANNEL_NAMES: [&str; CHANNELS] = ["ax", "ay", "az", "lax", "lay", "laz", "gx", "gy", "gz"];

/// The closed-set taxonomy: 22 movement roots followed by `other`.
pub const ACTIVITY_CLASSES: [&str; 23] = [
    "bend", "curl", "drink", "eat", "jump", "lie down", "lift", "lunge", "pick", "pull", "push",
    "put down", "raise", "read", "row", "run", "sit", "squat", "pick up", "stretch", "walk",
    "dance", "other",
];

pub const TAXONOMY_VERSION: &str = "movement-23/v1";

pub fn class_index(name: &str) -> Option<usize> {
    ACTIVITY_CLASSES.iter().position(|&c| c == name)
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("shape mismatch in {path} line {line}: {message}")]
    ShapeMismatch { path: PathBuf, line: usize, message: String },
    #[error("mask disagrees with missing values in {path} line {line}")]
    MaskMismatch { path: PathBuf, line: usize },
    #[error("unknown position id `{0}`")]
    UnknownPosition(String),
    #[error("timestamps decrease in {path} at line {line}")]
    NonMonotone { path: PathBuf, line: usize },
    #[error("parse error in {path} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("invalid stream: {0}")]
    InvalidStream(String),
    #[error("split needs at least 2 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
}

/// On-body sensor placement. Serialized in snake case (`wrist_r`, `thigh_l`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Head,
    Chest,
    UpperBack,
    LowerBack,
    Waist,
    UpperArmL,
    UpperArmR,
    WristL,
    WristR,
    ThighL,
    ThighR,
    ShinL,
    ShinR,
    FootL,
    FootR,
}

impl Position {
    pub const COUNT: usize = 15;

    pub const ALL: [Position; Self::COUNT] = [
        Position::Head,
        Position::Chest,
        Position::UpperBack,
        Position::LowerBack,
        Position::Waist,
        Position::UpperArmL,
        Position::UpperArmR,
        Position::WristL,
        Position::WristR,
        Position::ThighL,
        Position::ThighR,
        Position::ShinL,
        Position::ShinR,
        Position::FootL,
        Position::FootR,
    ];

    /// Index into [`Position::ALL`]; used for presence indicator vectors.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Position::Head => "head",
            Position::Chest => "chest",
            Position::UpperBack => "upper_back",
            Position::LowerBack => "lower_back",
            Position::Waist => "waist",
            Position::UpperArmL => "upper_arm_l",
            Position::UpperArmR => "upper_arm_r",
            Position::WristL => "wrist_l",
            Position::WristR => "wrist_r",
            Position::ThighL => "thigh_l",
            Position::ThighR => "thigh_r",
            Position::ShinL => "shin_l",
            Position::ShinR => "shin_r",
            Position::FootL => "foot_l",
            Position::FootR => "foot_r",
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Position {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Position::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| DatasetError::UnknownPosition(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSource {
    Expert,
    Narration,
    Vlm,
}

/// One body position's recording.
///
/// Invariants (checked by [`SensorStream::new`]): samples and mask have the
/// same `T × C` shape, masked entries are `NaN` and unmasked entries finite,
/// timestamps strictly increase and `T ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub position: Position,
    pub sample_rate_hz: f64,
    timestamps: Vec<f64>,
    samples: Signal,
    mask: Vec<bool>,
}

impl SensorStream {
    pub fn new(
        position: Position,
        sample_rate_hz: f64,
        timestamps: Vec<f64>,
        samples: Signal,
        mask: Vec<bool>,
    ) -> Result<Self, DatasetError> {
        let stream = Self { position, sample_rate_hz, timestamps, samples, mask };
        stream.check().map_err(DatasetError::InvalidStream)?;
        Ok(stream)
    }

    /// Builds a stream from rows whose timestamps may repeat, keeping the
    /// first row of each duplicate run. Returns the stream and the number of
    /// rows dropped.
    pub fn new_dedup(
        position: Position,
        sample_rate_hz: f64,
        timestamps: Vec<f64>,
        samples: Signal,
        mask: Vec<bool>,
    ) -> Result<(Self, usize), DatasetError> {
        let channels = samples.channels();
        if timestamps.len() != samples.len() || mask.len() != samples.len() * channels {
            return Err(DatasetError::InvalidStream("timestamps, samples and mask disagree in shape".into()));
        }
        let mut keep = Vec::with_capacity(timestamps.len());
        for (i, &t) in timestamps.iter().enumerate() {
            if i > 0 && t == timestamps[i - 1] {
                continue;
            }
            keep.push(i);
        }
        let dropped = timestamps.len() - keep.len();
        if dropped == 0 {
            return Self::new(position, sample_rate_hz, timestamps, samples, mask).map(|s| (s, 0));
        }
        let mut data = Vec::with_capacity(keep.len() * channels);
        let mut new_mask = Vec::with_capacity(keep.len() * channels);
        for &i in &keep {
            data.extend_from_slice(samples.row(i));
            new_mask.extend_from_slice(&mask[i * channels..(i + 1) * channels]);
        }
        let ts = keep.iter().map(|&i| timestamps[i]).collect();
        let samples = Signal::from_vec(keep.len(), channels, data).expect("shape");
        Self::new(position, sample_rate_hz, ts, samples, new_mask).map(|s| (s, dropped))
    }

    fn check(&self) -> Result<(), String> {
        let (t_len, channels) = self.samples.shape();
        if t_len == 0 {
            return Err(format!("{}: stream has no samples", self.position));
        }
        if channels != CHANNELS {
            return Err(format!("{}: expected {CHANNELS} channels, found {channels}", self.position));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(format!("{}: sample rate must be positive", self.position));
        }
        if self.timestamps.len() != t_len || self.mask.len() != t_len * channels {
            return Err(format!("{}: timestamps, samples and mask disagree in shape", self.position));
        }
        for (i, w) in self.timestamps.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(format!("{}: timestamps not strictly increasing at row {}", self.position, i + 1));
            }
        }
        if self.timestamps.iter().any(|t| !t.is_finite()) {
            return Err(format!("{}: non-finite timestamp", self.position));
        }
        for (i, (&v, &m)) in self.samples.as_slice().iter().zip(&self.mask).enumerate() {
            if m != v.is_nan() || (!m && !v.is_finite()) {
                return Err(format!(
                    "{}: sample ({}, {}) violates the NaN/mask contract",
                    self.position,
                    i / channels,
                    i % channels
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    /// Samples with `NaN` at masked entries.
    pub fn samples(&self) -> &Signal {
        &self.samples
    }

    /// Row-major `T × C` missingness mask.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_missing(&self, t: usize, c: usize) -> bool {
        self.mask[t * CHANNELS + c]
    }

    pub fn row_missing(&self, t: usize) -> bool {
        self.mask[t * CHANNELS..(t + 1) * CHANNELS].iter().any(|&m| m)
    }

    pub fn missing_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }

    pub fn start_s(&self) -> f64 {
        self.timestamps[0]
    }

    /// End of coverage: last timestamp plus one nominal sample period.
    pub fn end_s(&self) -> f64 {
        self.timestamps[self.timestamps.len() - 1] + 1.0 / self.sample_rate_hz
    }

    /// Half-open row range whose timestamps fall in `[start_s, end_s)`,
    /// with a quarter-period tolerance for timestamp rounding.
    pub fn index_range(&self, start_s: f64, end_s: f64) -> (usize, usize) {
        let tol = 0.25 / self.sample_rate_hz;
        let lo = self.timestamps.partition_point(|&t| t < start_s - tol);
        let hi = self.timestamps.partition_point(|&t| t < end_s - tol);
        (lo, hi.max(lo))
    }
}

/// An annotated interval of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub session_id: String,
    pub subject_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub positions: Vec<Position>,
    pub narration: Option<String>,
    pub expert_soft: Option<String>,
    pub hard_class: Option<String>,
    pub annotation_source: AnnotationSource,
}

impl Segment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// Description used as the retrieval target: the first text present in
    /// `preference` order, falling back to the hard class name.
    pub fn description(&self, preference: DescriptionSource) -> Option<&str> {
        let order: [&Option<String>; 3] = match preference {
            DescriptionSource::Expert => [&self.expert_soft, &self.narration, &self.hard_class],
            DescriptionSource::Narration => [&self.narration, &self.expert_soft, &self.hard_class],
            DescriptionSource::HardClass => [&self.hard_class, &self.expert_soft, &self.narration],
        };
        order.into_iter().find_map(|s| s.as_deref())
    }
}

/// Which annotation serves as a segment's gold description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptionSource {
    #[default]
    Expert,
    Narration,
    HardClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub subject_id: String,
    pub streams: Vec<SensorStream>,
    pub segments: Vec<Segment>,
}

impl Session {
    pub fn stream(&self, position: Position) -> Option<&SensorStream> {
        self.streams.iter().find(|s| s.position == position)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub sessions: Vec<Session>,
    /// Non-fatal notes collected while loading (e.g. dropped duplicate timestamps).
    pub load_warnings: Vec<String>,
}

impl Dataset {
    pub fn new(sessions: Vec<Session>) -> Self {
        Self { sessions, load_warnings: Vec::new() }
    }

    /// Sorted distinct subject ids.
    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.sessions.iter().map(|s| s.subject_id.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Sorted distinct recorded positions.
    pub fn positions(&self) -> Vec<Position> {
        let set: BTreeSet<Position> =
            self.sessions.iter().flat_map(|s| s.streams.iter().map(|st| st.position)).collect();
        set.into_iter().collect()
    }

    pub fn segment_count(&self) -> usize {
        self.sessions.iter().map(|s| s.segments.len()).sum()
    }

    /// All segments with their session index, in storage order.
    pub fn segments(&self) -> impl Iterator<Item = (usize, &Segment)> {
        self.sessions.iter().enumerate().flat_map(|(i, s)| s.segments.iter().map(move |seg| (i, seg)))
    }
}
