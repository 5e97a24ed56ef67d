use std::collections::BTreeSet;

use serde::Serialize;

use super::{class_index, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Session id, or `session/segment` for segment-level problems.
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub sessions: usize,
    pub segments: usize,
    pub positions: usize,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every dataset-level invariant, reporting rather than failing.
pub fn validate(d: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |location: String, message: String| violations.push(Violation { location, message });

    let mut session_ids = BTreeSet::new();
    let mut segment_ids = BTreeSet::new();
    for session in &d.sessions {
        if !session_ids.insert(session.session_id.as_str()) {
            push(session.session_id.clone(), "duplicate session id".into());
        }
        let mut seen_positions = BTreeSet::new();
        for stream in &session.streams {
            if !seen_positions.insert(stream.position) {
                push(session.session_id.clone(), format!("position {} recorded twice", stream.position));
            }
        }
        for seg in &session.segments {
            let loc = format!("{}/{}", session.session_id, seg.id);
            if !segment_ids.insert(seg.id.as_str()) {
                push(loc.clone(), "duplicate segment id".into());
            }
            if seg.session_id != session.session_id {
                push(loc.clone(), format!("segment claims session {}", seg.session_id));
            }
            if seg.subject_id != session.subject_id {
                push(loc.clone(), format!("segment subject {} differs from session subject", seg.subject_id));
            }
            if !(seg.start_s.is_finite() && seg.end_s.is_finite() && seg.end_s > seg.start_s) {
                push(loc.clone(), format!("interval [{}, {}) is empty or inverted", seg.start_s, seg.end_s));
            }
            if seg.positions.is_empty() {
                push(loc.clone(), "segment lists no positions".into());
            }
            if seg.narration.is_none() && seg.expert_soft.is_none() && seg.hard_class.is_none() {
                push(loc.clone(), "segment carries no annotation".into());
            }
            if let Some(class) = &seg.hard_class {
                if class_index(class).is_none() {
                    push(loc.clone(), format!("hard class `{class}` is not in the taxonomy"));
                }
            }
            for &p in &seg.positions {
                match session.stream(p) {
                    None => push(loc.clone(), format!("position {p} has no stream in this session")),
                    Some(stream) => {
                        let tol = 0.5 / stream.sample_rate_hz;
                        if seg.start_s < stream.start_s() - tol || seg.end_s > stream.end_s() + tol {
                            push(loc.clone(), format!("interval exceeds the {p} stream bounds"));
                        }
                    }
                }
            }
        }
    }

    ValidationReport {
        sessions: d.sessions.len(),
        segments: d.segment_count(),
        positions: d.positions().len(),
        violations,
        warnings: d.load_warnings.clone(),
    }
}
