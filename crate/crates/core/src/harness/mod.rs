//! Experiment harness: leave-one-subject-out evaluation of the tokenizer and
//! the alignment map, with seeded repetitions, aggregated reports and sweeps.

mod config;
mod engine;
mod report;
mod sweep;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{DataSource, ExperimentConfig, RetrievalParams, SEED_ENV};
pub use engine::{FitFingerprints, FoldRecord};
pub use report::render_text;
pub use sweep::{run_sweep, SweepAxis, SweepOutcome, Trend};

use crate::dataset::{make_splits, Dataset};
use crate::util::{derive_seed, fingerprint};
use engine::Engine;

pub const REPORT_FORMAT: &str = "narrate-report/1";

/// Metric names in report column order.
pub const METRICS: [&str; 12] = [
    "time_l1",
    "spectral_l1",
    "wavelet_l1",
    "js",
    "distortion",
    "tokenizer_loss",
    "r@1",
    "r@5",
    "mrr",
    "ndcg@5",
    "accuracy",
    "macro_f1",
];

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("split {split}, repetition {repetition}, fold {fold} (held out {subject}): {source}")]
    Fold { split: String, repetition: usize, fold: usize, subject: String, source: Box<HarnessError> },
    #[error("leakage: {0}")]
    Leakage(String),
    #[error("io: {path}: {message}")]
    Io { path: String, message: String },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

/// Mean and population standard deviation (denominator `n`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(Summary { mean, std: var.sqrt(), n: values.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub fingerprint: String,
    pub sessions: usize,
    pub segments: usize,
    pub subjects: usize,
    pub positions: Vec<String>,
}

impl DatasetSummary {
    pub fn of(d: &Dataset) -> Self {
        let ids: Vec<&str> = d.segments().map(|(_, s)| s.id.as_str()).collect();
        Self {
            fingerprint: fingerprint(&ids),
            sessions: d.sessions.len(),
            segments: d.segment_count(),
            subjects: d.subjects().len(),
            positions: d.positions().iter().map(|p| p.as_str().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub std_denominator: String,
    /// Split label, then metric name.
    pub summary: BTreeMap<String, BTreeMap<String, Summary>>,
    pub folds: Vec<FoldRecord>,
}

impl Report {
    pub fn metric(&self, split: &str, metric: &str) -> Option<Summary> {
        self.summary.get(split)?.get(metric).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let r: Report = serde_json::from_str(text).map_err(|e| HarnessError::Data(format!("report: {e}")))?;
        if r.format != REPORT_FORMAT {
            return Err(HarnessError::Data(format!("unsupported report format {}", r.format)));
        }
        Ok(r)
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()).map_err(|e| HarnessError::io(&json, e))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, render_text(self)).map_err(|e| HarnessError::io(&txt, e))?;
        Ok(())
    }
}

/// Loads the configured data and runs every split and repetition.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.check()?;
    let data = cfg.load_data()?;
    run_on(cfg, &data)
}

/// Runs an experiment on an already loaded dataset.
pub fn run_on(cfg: &ExperimentConfig, data: &Dataset) -> Result<Report, HarnessError> {
    cfg.check()?;
    let mut engine = Engine::new(data)?;
    run_with(&mut engine, cfg, data)
}

fn run_with(engine: &mut Engine<'_>, cfg: &ExperimentConfig, data: &Dataset) -> Result<Report, HarnessError> {
    let mut plans = Vec::with_capacity(cfg.splits.len());
    for spec in &cfg.splits {
        let folds = make_splits(data, spec).map_err(|e| HarnessError::Config(format!("{}: {e}", spec.label())))?;
        plans.push((spec.label(), folds));
    }
    let mut records = Vec::new();
    for rep in 0..cfg.repetitions {
        let rep_seed = derive_seed(cfg.seed, &[rep as u64]);
        for (si, (label, folds)) in plans.iter().enumerate() {
            for fold in folds {
                let seed = derive_seed(rep_seed, &[si as u64, fold.index as u64]);
                let record = engine.run_fold(cfg, fold, label, rep, seed).map_err(|e| HarnessError::Fold {
                    split: label.clone(),
                    repetition: rep,
                    fold: fold.index,
                    subject: fold.held_out_subject.clone(),
                    source: Box::new(e),
                })?;
                records.push(record);
            }
        }
    }
    let mut summary: BTreeMap<String, BTreeMap<String, Summary>> = BTreeMap::new();
    for (label, _) in &plans {
        let mut per_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in records.iter().filter(|r| &r.split == label) {
            for (name, &v) in &r.metrics {
                per_metric.entry(name.clone()).or_default().push(v);
            }
        }
        let entry = summary.entry(label.clone()).or_default();
        for (name, values) in per_metric {
            if let Some(s) = aggregate(&values) {
                entry.insert(name, s);
            }
        }
    }
    Ok(Report {
        format: REPORT_FORMAT.to_string(),
        config: cfg.clone(),
        dataset: DatasetSummary::of(data),
        std_denominator: "N".to_string(),
        summary,
        folds: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_uses_population_std() {
        let s = aggregate(&[0.2, 0.4]).unwrap();
        assert!((s.mean - 0.3).abs() < 1e-15);
        assert!((s.std - 0.1).abs() < 1e-15);
        assert_eq!(s.n, 2);
        assert!(aggregate(&[]).is_none());
    }
}
