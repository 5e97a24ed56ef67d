//! Leave-one-subject-out splits: cross-subject (XS), cross-subject-and-position
//! (XSP) and missing-sensor (MS).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, Position};
use crate::util::fingerprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitMode {
    XS,
    XSP,
    MS,
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitMode::XS => "XS",
            SplitMode::XSP => "XSP",
            SplitMode::MS => "MS",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// XSP: positions that never appear in training.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub held_out_positions: Vec<Position>,
    /// MS: the only positions exposed at test time.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inference_positions: Vec<Position>,
    /// MS: restrict training to these positions (`None` trains on all).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_positions: Option<Vec<Position>>,
    /// Evaluate a single fold instead of every subject.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_out_subject: Option<String>,
}

impl SplitSpec {
    pub fn cross_subject() -> Self {
        Self {
            mode: SplitMode::XS,
            held_out_positions: Vec::new(),
            inference_positions: Vec::new(),
            train_positions: None,
            held_out_subject: None,
        }
    }

    pub fn cross_subject_position(held_out: Vec<Position>) -> Self {
        Self { mode: SplitMode::XSP, held_out_positions: held_out, ..Self::cross_subject() }
    }

    pub fn missing_sensor(inference: Vec<Position>, train: Option<Vec<Position>>) -> Self {
        Self { mode: SplitMode::MS, inference_positions: inference, train_positions: train, ..Self::cross_subject() }
    }

    /// Short label used in reports, e.g. `XS`, `XSP[wrist_r]`, `MS[wrist_r|all]`.
    pub fn label(&self) -> String {
        let join = |ps: &[Position]| ps.iter().map(|p| p.as_str()).collect::<Vec<_>>().join("+");
        match self.mode {
            SplitMode::XS => "XS".into(),
            SplitMode::XSP => format!("XSP[{}]", join(&self.held_out_positions)),
            SplitMode::MS => format!(
                "MS[{}|{}]",
                join(&self.inference_positions),
                self.train_positions.as_deref().map_or_else(|| "all".to_string(), join)
            ),
        }
    }
}

/// A segment as exposed to one side of a fold: which positions it may use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SegmentView {
    pub segment_id: String,
    pub session: usize,
    pub segment: usize,
    pub positions: Vec<Position>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fold {
    pub index: usize,
    pub mode: SplitMode,
    pub held_out_subject: String,
    pub train: Vec<SegmentView>,
    pub test: Vec<SegmentView>,
}

impl Fold {
    pub fn train_ids(&self) -> Vec<&str> {
        self.train.iter().map(|v| v.segment_id.as_str()).collect()
    }

    pub fn test_ids(&self) -> Vec<&str> {
        self.test.iter().map(|v| v.segment_id.as_str()).collect()
    }

    pub fn train_fingerprint(&self) -> String {
        fingerprint(&self.train_ids())
    }

    pub fn test_fingerprint(&self) -> String {
        fingerprint(&self.test_ids())
    }
}

fn check_positions(available: &BTreeSet<Position>, wanted: &[Position], what: &str) -> Result<(), DatasetError> {
    if wanted.is_empty() {
        return Err(DatasetError::InvalidSplit(format!("{what} must not be empty")));
    }
    match wanted.iter().find(|p| !available.contains(p)) {
        Some(p) => Err(DatasetError::InvalidSplit(format!("{what} position {p} is absent from the dataset"))),
        None => Ok(()),
    }
}

/// One fold per held-out subject, in sorted subject order.
pub fn make_splits(d: &Dataset, spec: &SplitSpec) -> Result<Vec<Fold>, DatasetError> {
    let subjects = d.subjects();
    if subjects.len() < 2 {
        return Err(DatasetError::TooFewSubjects(subjects.len()));
    }
    let available: BTreeSet<Position> = d.positions().into_iter().collect();
    match spec.mode {
        SplitMode::XS => {}
        SplitMode::XSP => check_positions(&available, &spec.held_out_positions, "held-out")?,
        SplitMode::MS => {
            check_positions(&available, &spec.inference_positions, "inference")?;
            if let Some(train) = &spec.train_positions {
                check_positions(&available, train, "training")?;
            }
        }
    }
    let held_out: BTreeSet<Position> = spec.held_out_positions.iter().copied().collect();
    let inference: BTreeSet<Position> = spec.inference_positions.iter().copied().collect();
    let train_only: Option<BTreeSet<Position>> = spec.train_positions.as_ref().map(|v| v.iter().copied().collect());

    let targets: Vec<&String> = match &spec.held_out_subject {
        Some(s) => {
            let found = subjects
                .iter()
                .find(|x| *x == s)
                .ok_or_else(|| DatasetError::InvalidSplit(format!("subject {s} not in dataset")))?;
            vec![found]
        }
        None => subjects.iter().collect(),
    };

    let mut folds = Vec::with_capacity(targets.len());
    for (index, subject) in targets.into_iter().enumerate() {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (si, session) in d.sessions.iter().enumerate() {
            let is_test = &session.subject_id == subject;
            for (gi, seg) in session.segments.iter().enumerate() {
                let keep = |p: &Position| -> bool {
                    match (spec.mode, is_test) {
                        (SplitMode::XS, _) => true,
                        (SplitMode::XSP, false) => !held_out.contains(p),
                        (SplitMode::XSP, true) => held_out.contains(p),
                        (SplitMode::MS, false) => train_only.as_ref().is_none_or(|t| t.contains(p)),
                        (SplitMode::MS, true) => inference.contains(p),
                    }
                };
                let positions: Vec<Position> = seg.positions.iter().copied().filter(keep).collect();
                if positions.is_empty() {
                    continue;
                }
                let view = SegmentView { segment_id: seg.id.clone(), session: si, segment: gi, positions };
                if is_test {
                    test.push(view);
                } else {
                    train.push(view);
                }
            }
        }
        folds.push(Fold { index, mode: spec.mode, held_out_subject: subject.clone(), train, test });
    }
    Ok(folds)
}
