//! Synthetic compositional-motion corpus with known ground truth.
//!
//! Each segment is a sequence of micro-action primitives drawn from a fixed
//! library. A primitive is a one-dimensional waveform that every body
//! position observes through its own 9-channel mixing vector, so positions
//! are linearly correlated. Subjects differ by an amplitude scale and a time
//! warp. Descriptions are produced by a template grammar
//! (`<phrase> then <phrase> ...`) from per-primitive phrase lists, which makes
//! the text invertible back to the primitive sequence.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AnnotationSource, Dataset, Position, Segment, SensorStream, Session, CHANNELS};
use crate::signal::Signal;
use crate::util::{derive_seed, rng_from};

const LIBRARY_SEED: u64 = 0x5eed_0f_11b4a7;

/// Order in which positions are added as `n_positions` grows.
pub const SYNTH_POSITION_ORDER: [Position; Position::COUNT] = [
    Position::WristR,
    Position::ThighL,
    Position::Head,
    Position::Chest,
    Position::WristL,
    Position::ThighR,
    Position::Waist,
    Position::UpperArmR,
    Position::UpperArmL,
    Position::ShinR,
    Position::ShinL,
    Position::FootR,
    Position::FootL,
    Position::UpperBack,
    Position::LowerBack,
];

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
    #[error("duration {duration_s} s (nominal {nominal_s} s) outside [{lo}, {hi}] for primitive {id}")]
    DurationOutOfRange { id: String, duration_s: f64, nominal_s: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    SinusoidBurst,
    ImpulseTrain,
    Ramp,
    DampedOscillation,
    Rest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    Arms,
    Legs,
    Torso,
    Whole,
}

fn in_region(p: Position, r: Region) -> bool {
    use Position::*;
    match r {
        Region::Arms => matches!(p, UpperArmL | UpperArmR | WristL | WristR),
        Region::Legs => matches!(p, ThighL | ThighR | ShinL | ShinR | FootL | FootR),
        Region::Torso => matches!(p, Head | Chest | UpperBack | LowerBack | Waist),
        Region::Whole => true,
    }
}

/// A reusable micro-action.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub id: String,
    /// Taxonomy class this primitive belongs to.
    pub class_name: String,
    pub kind: GeneratorKind,
    pub frequency_hz: f64,
    pub amplitude: f64,
    /// Admissible nominal (unwarped) duration range in seconds.
    pub duration_range_s: (f64, f64),
    /// Per-position channel mixing weights, indexed by [`Position::index`].
    pub mixing: Vec<[f64; CHANNELS]>,
    /// Per-position channel phase offsets in radians.
    pub channel_phase: Vec<[f64; CHANNELS]>,
    /// Paraphrases; the first one is canonical. Phrase sets are disjoint
    /// across primitives and never contain the word `then`.
    pub phrases: Vec<String>,
}

struct Template {
    id: &'static str,
    class: &'static str,
    kind: GeneratorKind,
    freq: f64,
    range: (f64, f64),
    region: Region,
    phrases: [&'static str; 3],
}

const TEMPLATES: [Template; 16] = [
    Template { id: "walk", class: "walk", kind: GeneratorKind::SinusoidBurst, freq: 1.8, range: (3.0, 7.0), region: Region::Legs, phrases: ["walk forward", "stroll ahead", "pace along"] },
    Template { id: "squat", class: "squat", kind: GeneratorKind::Ramp, freq: 0.5, range: (2.0, 4.0), region: Region::Legs, phrases: ["squat down", "crouch low", "drop into a squat"] },
    Template { id: "curl", class: "curl", kind: GeneratorKind::SinusoidBurst, freq: 0.7, range: (3.0, 6.0), region: Region::Arms, phrases: ["curl the arms", "do arm curls", "flex the elbows"] },
    Template { id: "jump", class: "jump", kind: GeneratorKind::ImpulseTrain, freq: 1.3, range: (2.0, 5.0), region: Region::Whole, phrases: ["jump in place", "hop repeatedly", "bounce up and down"] },
    Template { id: "idle", class: "other", kind: GeneratorKind::Rest, freq: 0.0, range: (2.0, 5.0), region: Region::Whole, phrases: ["stand still", "pause briefly", "stay idle"] },
    Template { id: "drink", class: "drink", kind: GeneratorKind::DampedOscillation, freq: 2.5, range: (2.0, 5.0), region: Region::Arms, phrases: ["drink from a cup", "take a sip", "sip a beverage"] },
    Template { id: "run", class: "run", kind: GeneratorKind::SinusoidBurst, freq: 2.8, range: (3.0, 7.0), region: Region::Legs, phrases: ["run ahead", "jog forward", "sprint along"] },
    Template { id: "push", class: "push", kind: GeneratorKind::ImpulseTrain, freq: 0.8, range: (2.0, 5.0), region: Region::Arms, phrases: ["push forward", "shove ahead", "press outward"] },
    Template { id: "bend", class: "bend", kind: GeneratorKind::Ramp, freq: 0.3, range: (2.0, 5.0), region: Region::Torso, phrases: ["bend over", "lean down", "stoop low"] },
    Template { id: "stretch", class: "stretch", kind: GeneratorKind::Ramp, freq: 0.2, range: (3.0, 6.0), region: Region::Whole, phrases: ["stretch the body", "reach upward", "extend the limbs"] },
    Template { id: "dance", class: "dance", kind: GeneratorKind::SinusoidBurst, freq: 2.2, range: (3.0, 7.0), region: Region::Whole, phrases: ["dance around", "groove to music", "sway rhythmically"] },
    Template { id: "row", class: "row", kind: GeneratorKind::SinusoidBurst, freq: 0.5, range: (3.0, 6.0), region: Region::Arms, phrases: ["row the arms", "make rowing strokes", "haul like rowing"] },
    Template { id: "lift", class: "lift", kind: GeneratorKind::Ramp, freq: 0.4, range: (2.0, 4.0), region: Region::Torso, phrases: ["lift a box", "hoist something", "heave a load"] },
    Template { id: "pull", class: "pull", kind: GeneratorKind::ImpulseTrain, freq: 0.6, range: (2.0, 5.0), region: Region::Arms, phrases: ["pull toward the body", "tug backward", "draw inward"] },
    Template { id: "lunge", class: "lunge", kind: GeneratorKind::DampedOscillation, freq: 1.5, range: (2.0, 5.0), region: Region::Legs, phrases: ["lunge forward", "step into a lunge", "stride low"] },
    Template { id: "eat", class: "eat", kind: GeneratorKind::DampedOscillation, freq: 3.0, range: (2.0, 5.0), region: Region::Arms, phrases: ["eat a snack", "take a bite", "chew food"] },
];

/// Number of primitives available to [`CorpusConfig::n_primitives`].
pub const LIBRARY_SIZE: usize = TEMPLATES.len();

/// The first `n` primitives of the fixed library. Mixing weights and channel
/// phases come from a fixed seed, so the library is identical across corpora.
pub fn primitive_library(n: usize) -> Vec<Primitive> {
    TEMPLATES
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, t)| {
            let mut rng = rng_from(derive_seed(LIBRARY_SEED, &[i as u64]));
            let mut mixing = Vec::with_capacity(Position::COUNT);
            let mut channel_phase = Vec::with_capacity(Position::COUNT);
            for p in Position::ALL {
                let affinity = match t.region {
                    Region::Whole => 0.8,
                    r if in_region(p, r) => 1.0,
                    _ => 0.3,
                };
                let mut w = [0.0; CHANNELS];
                for v in &mut w {
                    *v = StandardNormal.sample(&mut rng);
                }
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in &mut w {
                    *v *= affinity * (CHANNELS as f64).sqrt() / norm;
                }
                let mut ph = [0.0; CHANNELS];
                for v in &mut ph {
                    *v = rng.random_range(0.0..TAU);
                }
                mixing.push(w);
                channel_phase.push(ph);
            }
            Primitive {
                id: t.id.to_string(),
                class_name: t.class.to_string(),
                kind: t.kind,
                frequency_hz: t.freq,
                amplitude: 1.0,
                duration_range_s: t.range,
                mixing,
                channel_phase,
                phrases: t.phrases.iter().map(|s| s.to_string()).collect(),
            }
        })
        .collect()
}

/// Per-subject execution style.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectStyle {
    pub amplitude_scale: f64,
    /// Multiplies durations and divides frequencies.
    pub time_warp: f64,
    pub noise_std: f64,
}

impl SubjectStyle {
    pub fn neutral() -> Self {
        Self { amplitude_scale: 1.0, time_warp: 1.0, noise_std: 0.0 }
    }
}

fn triangle(phase_cycles: f64) -> f64 {
    let f = phase_cycles.rem_euclid(1.0);
    1.0 - 4.0 * (f - 0.5).abs()
}

/// Renders `p` for `duration_s` seconds at one position.
///
/// The waveform phase depends only on `seed`, so all positions rendered with
/// the same seed observe the same motion; the additive noise stream is
/// additionally keyed by position.
pub fn render_primitive(
    p: &Primitive,
    duration_s: f64,
    sample_rate_hz: f64,
    style: &SubjectStyle,
    position: Position,
    seed: u64,
) -> Result<Signal, SynthError> {
    let nominal = duration_s / style.time_warp;
    let tol = 1.0 / (sample_rate_hz * style.time_warp);
    let (lo, hi) = p.duration_range_s;
    if !(duration_s > 0.0 && nominal >= lo - tol && nominal <= hi + tol) {
        return Err(SynthError::DurationOutOfRange { id: p.id.clone(), duration_s, nominal_s: nominal, lo, hi });
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    let mut out = Signal::zeros(n, CHANNELS);
    let phase = rng_from(derive_seed(seed, &[0])).random_range(0.0..TAU);
    let freq = p.frequency_hz / style.time_warp;
    let amp = p.amplitude * style.amplitude_scale;
    let w = &p.mixing[position.index()];
    let theta = &p.channel_phase[position.index()];
    let taper_len = (0.2 * style.time_warp).min(duration_s / 4.0);
    let pulse_width = 0.05 * style.time_warp;
    let repeat_period = 1.25 * style.time_warp;
    let decay = 0.25 * style.time_warp;

    for i in 0..n {
        let t = i as f64 / sample_rate_hz;
        for c in 0..CHANNELS {
            let g = match p.kind {
                GeneratorKind::Rest => 0.0,
                GeneratorKind::SinusoidBurst => {
                    let edge = t.min(duration_s - t);
                    let taper = if edge >= taper_len { 1.0 } else { 0.5 - 0.5 * (PI * edge / taper_len).cos() };
                    (TAU * freq * t + phase + theta[c]).sin() * taper
                }
                GeneratorKind::ImpulseTrain => {
                    // Pulses at a per-channel lag of up to a tenth of a period.
                    let lag = (phase + 0.1 * theta[c]) / (TAU * freq);
                    let u = (t - lag) * freq;
                    let nearest = u.round();
                    let dt = (u - nearest) / freq;
                    (-0.5 * (dt / pulse_width).powi(2)).exp()
                }
                GeneratorKind::Ramp => triangle(freq * t + phase / TAU + 0.05 * theta[c] / TAU),
                GeneratorKind::DampedOscillation => {
                    let tau = (t + phase / TAU * repeat_period).rem_euclid(repeat_period);
                    (-tau / decay).exp() * (TAU * freq * tau + theta[c]).sin()
                }
            };
            out.set(i, c, amp * w[c] * g);
        }
    }
    if style.noise_std > 0.0 {
        let mut noise = rng_from(derive_seed(seed, &[1, position.index() as u64]));
        for v in out.as_mut_slice() {
            let z: f64 = StandardNormal.sample(&mut noise);
            *v += style.noise_std * z;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleRanges {
    pub amplitude: (f64, f64),
    pub time_warp: (f64, f64),
}

impl Default for StyleRanges {
    fn default() -> Self {
        Self { amplitude: (0.8, 1.25), time_warp: (0.9, 1.1) }
    }
}

fn d_sample_rate() -> f64 {
    30.0
}
fn d_noise() -> f64 {
    0.05
}
fn d_max_prims() -> usize {
    3
}
fn d_gap() -> (f64, f64) {
    (0.5, 1.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_subjects: usize,
    pub n_positions: usize,
    pub n_primitives: usize,
    pub segments_per_subject: usize,
    #[serde(default = "d_sample_rate")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub style: StyleRanges,
    #[serde(default = "d_noise")]
    pub noise_std: f64,
    #[serde(default = "d_max_prims")]
    pub max_primitives_per_segment: usize,
    /// Unannotated rest between segments, uniform in this range (seconds).
    #[serde(default = "d_gap")]
    pub gap_s: (f64, f64),
    /// When set, nominal primitive durations are multiples of this step.
    #[serde(default)]
    pub duration_step_s: Option<f64>,
    /// Probability that a segment is annotated with only a random subset of positions.
    #[serde(default)]
    pub position_dropout: f64,
    pub seed: u64,
}

impl CorpusConfig {
    pub fn new(n_subjects: usize, n_positions: usize, n_primitives: usize, segments_per_subject: usize, seed: u64) -> Self {
        Self {
            n_subjects,
            n_positions,
            n_primitives,
            segments_per_subject,
            sample_rate_hz: d_sample_rate(),
            missing_rate: 0.0,
            style: StyleRanges::default(),
            noise_std: d_noise(),
            max_primitives_per_segment: d_max_prims(),
            gap_s: d_gap(),
            duration_step_s: None,
            position_dropout: 0.0,
            seed,
        }
    }

    pub fn check(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.n_subjects == 0 || self.n_positions == 0 || self.n_primitives == 0 || self.segments_per_subject == 0 {
            return bad("all counts must be positive");
        }
        if self.n_positions > Position::COUNT {
            return bad("at most 15 positions");
        }
        if self.n_primitives > LIBRARY_SIZE {
            return bad("n_primitives exceeds the primitive library");
        }
        if self.max_primitives_per_segment == 0 {
            return bad("max_primitives_per_segment must be positive");
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return bad("sample_rate_hz must be positive");
        }
        if !(0.0..0.5).contains(&self.missing_rate) {
            return bad("missing_rate must lie in [0, 0.5)");
        }
        if !(0.0..=1.0).contains(&self.position_dropout) {
            return bad("position_dropout must lie in [0, 1]");
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be non-negative");
        }
        let range_ok = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
        if !range_ok(self.style.amplitude) || !range_ok(self.style.time_warp) {
            return bad("style ranges must be positive and ordered");
        }
        if !(self.gap_s.0 >= 0.0 && self.gap_s.0 <= self.gap_s.1) {
            return bad("gap range must be non-negative and ordered");
        }
        if let Some(step) = self.duration_step_s {
            if !(step > 0.0) {
                return bad("duration_step_s must be positive");
            }
            for p in primitive_library(self.n_primitives) {
                let (lo, hi) = p.duration_range_s;
                if (lo / step).ceil() > (hi / step).floor() {
                    return bad("duration_step_s leaves some primitive without an admissible duration");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub segment_id: String,
    pub primitives: Vec<String>,
    /// Primitive boundaries in seconds: `start, b_1, ..., end`.
    pub boundaries_s: Vec<f64>,
    pub description: String,
    pub hard_class: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub records: Vec<GroundTruthRecord>,
}

impl GroundTruth {
    pub fn get(&self, segment_id: &str) -> Option<&GroundTruthRecord> {
        self.records.iter().find(|r| r.segment_id == segment_id)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"))?;
        }
        Ok(())
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        std::fs::write(path, buf)
    }
}

/// Joins one phrase per primitive with ` then `. `choice[i]` picks the phrase
/// of primitive `i`.
pub fn describe(prims: &[&Primitive], choice: &[usize]) -> String {
    prims
        .iter()
        .zip(choice)
        .map(|(p, &c)| p.phrases[c % p.phrases.len()].as_str())
        .collect::<Vec<_>>()
        .join(" then ")
}

/// Canonical description: the first phrase of every primitive.
pub fn canonical_description(prims: &[&Primitive]) -> String {
    describe(prims, &vec![0; prims.len()])
}

/// Inverts [`describe`]: maps a description back to primitive ids.
pub fn parse_description(text: &str, library: &[Primitive]) -> Option<Vec<String>> {
    text.split(" then ")
        .map(|phrase| library.iter().find(|p| p.phrases.iter().any(|q| q == phrase)).map(|p| p.id.clone()))
        .collect()
}

struct PlannedPrimitive {
    library_index: usize,
    samples: usize,
    seed: u64,
}

struct PlannedSegment {
    start: usize,
    prims: Vec<PlannedPrimitive>,
}

fn missing_rows(n: usize, rate: f64, seed: u64) -> Vec<bool> {
    // Two-state Markov chain with mean burst length 4 and stationary rate `rate`.
    const MEAN_BURST: f64 = 4.0;
    if rate <= 0.0 {
        return vec![false; n];
    }
    let leave = 1.0 / MEAN_BURST;
    let enter = rate * leave / (1.0 - rate);
    let mut rng = rng_from(seed);
    let mut missing = rng.random_bool(rate);
    (0..n)
        .map(|_| {
            let now = missing;
            missing = if missing { !rng.random_bool(leave) } else { rng.random_bool(enter) };
            now
        })
        .collect()
}

/// Generates a corpus and its ground truth. One session per subject.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<(Dataset, GroundTruth), SynthError> {
    cfg.check()?;
    let fs = cfg.sample_rate_hz;
    let library = primitive_library(cfg.n_primitives);
    let positions = &SYNTH_POSITION_ORDER[..cfg.n_positions];
    let mut sessions = Vec::with_capacity(cfg.n_subjects);
    let mut truth = GroundTruth::default();

    for s in 0..cfg.n_subjects {
        let mut srng = rng_from(derive_seed(cfg.seed, &[1, s as u64]));
        let style = SubjectStyle {
            amplitude_scale: srng.random_range(cfg.style.amplitude.0..=cfg.style.amplitude.1),
            time_warp: srng.random_range(cfg.style.time_warp.0..=cfg.style.time_warp.1),
            noise_std: cfg.noise_std,
        };
        let session_id = format!("s{s:02}");
        let subject_id = format!("p{s:02}");

        let mut cursor = 0usize;
        let mut plan = Vec::with_capacity(cfg.segments_per_subject);
        let mut segments = Vec::with_capacity(cfg.segments_per_subject);
        for g in 0..cfg.segments_per_subject {
            cursor += (srng.random_range(cfg.gap_s.0..=cfg.gap_s.1) * fs).round() as usize;
            let n_prims = srng.random_range(1..=cfg.max_primitives_per_segment);
            let mut prims: Vec<PlannedPrimitive> = Vec::with_capacity(n_prims);
            for i in 0..n_prims {
                let mut idx = srng.random_range(0..library.len());
                while library.len() > 1 && prims.last().is_some_and(|p| p.library_index == idx) {
                    idx = srng.random_range(0..library.len());
                }
                let (lo, hi) = library[idx].duration_range_s;
                let nominal = match cfg.duration_step_s {
                    Some(step) => {
                        let k = srng.random_range((lo / step).ceil() as u64..=(hi / step).floor() as u64);
                        k as f64 * step
                    }
                    None => srng.random_range(lo..=hi),
                };
                let samples = ((nominal * style.time_warp * fs).round() as usize).max(1);
                prims.push(PlannedPrimitive {
                    library_index: idx,
                    samples,
                    seed: derive_seed(cfg.seed, &[2, s as u64, g as u64, i as u64]),
                });
            }
            let start = cursor;
            let len: usize = prims.iter().map(|p| p.samples).sum();
            cursor += len;

            let seg_positions: Vec<Position> = if cfg.position_dropout > 0.0 && srng.random_bool(cfg.position_dropout) {
                let mut kept: Vec<Position> = positions.iter().copied().filter(|_| srng.random_bool(0.5)).collect();
                if kept.is_empty() {
                    kept.push(positions[srng.random_range(0..positions.len())]);
                }
                kept
            } else {
                positions.to_vec()
            };

            let refs: Vec<&Primitive> = prims.iter().map(|p| &library[p.library_index]).collect();
            let mut text_rng = rng_from(derive_seed(cfg.seed, &[5, s as u64, g as u64]));
            let choice: Vec<usize> = refs.iter().map(|p| text_rng.random_range(0..p.phrases.len())).collect();
            let canonical = canonical_description(&refs);
            // Longest primitive decides the class; the earliest wins ties.
            let longest = prims
                .iter()
                .enumerate()
                .fold(0, |best, (i, p)| if p.samples > prims[best].samples { i } else { best });
            let hard_class = refs[longest].class_name.clone();

            let seg_id = format!("{session_id}-{g:03}");
            let mut boundaries = vec![start as f64 / fs];
            let mut acc = start;
            for p in &prims {
                acc += p.samples;
                boundaries.push(acc as f64 / fs);
            }
            truth.records.push(GroundTruthRecord {
                segment_id: seg_id.clone(),
                primitives: refs.iter().map(|p| p.id.clone()).collect(),
                boundaries_s: boundaries,
                description: canonical.clone(),
                hard_class: hard_class.clone(),
            });
            segments.push(Segment {
                id: seg_id,
                session_id: session_id.clone(),
                subject_id: subject_id.clone(),
                start_s: start as f64 / fs,
                end_s: (start + len) as f64 / fs,
                positions: seg_positions,
                narration: Some(describe(&refs, &choice)),
                expert_soft: Some(canonical),
                hard_class: Some(hard_class),
                annotation_source: AnnotationSource::Expert,
            });
            plan.push(PlannedSegment { start, prims });
        }
        let total = cursor + (srng.random_range(cfg.gap_s.0..=cfg.gap_s.1) * fs).round() as usize + 1;

        let mut streams = Vec::with_capacity(positions.len());
        for (pi, &position) in positions.iter().enumerate() {
            let mut data = Signal::zeros(total, CHANNELS);
            if cfg.noise_std > 0.0 {
                let mut noise = rng_from(derive_seed(cfg.seed, &[3, s as u64, pi as u64]));
                for v in data.as_mut_slice() {
                    let z: f64 = StandardNormal.sample(&mut noise);
                    *v = cfg.noise_std * z;
                }
            }
            for seg in &plan {
                let mut offset = seg.start;
                for p in &seg.prims {
                    let rendered =
                        render_primitive(&library[p.library_index], p.samples as f64 / fs, fs, &style, position, p.seed)?;
                    for t in 0..p.samples {
                        data.row_mut(offset + t).copy_from_slice(rendered.row(t));
                    }
                    offset += p.samples;
                }
            }
            let missing = missing_rows(total, cfg.missing_rate, derive_seed(cfg.seed, &[4, s as u64, pi as u64]));
            let mut mask = vec![false; total * CHANNELS];
            for (t, &m) in missing.iter().enumerate() {
                if m {
                    for c in 0..CHANNELS {
                        data.set(t, c, f64::NAN);
                        mask[t * CHANNELS + c] = true;
                    }
                }
            }
            let timestamps = (0..total).map(|i| i as f64 / fs).collect();
            let stream = SensorStream::new(position, fs, timestamps, data, mask)
                .expect("generator upholds the stream contract");
            streams.push(stream);
        }
        sessions.push(Session { session_id, subject_id, streams, segments });
    }
    Ok((Dataset::new(sessions), truth))
}
