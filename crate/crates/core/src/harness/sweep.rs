use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::engine::Engine;
use super::{run_with, ExperimentConfig, HarnessError, Report};
use crate::tokenizer::Views;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Codebook size.
    K,
    /// Chunk window in seconds.
    Window,
    /// Feature views, e.g. `time+stft`.
    Views,
    /// Token augmentation `on` or `off`.
    Augment,
}

impl SweepAxis {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        match text.to_ascii_lowercase().as_str() {
            "k" => Ok(SweepAxis::K),
            "window" | "dt" => Ok(SweepAxis::Window),
            "views" => Ok(SweepAxis::Views),
            "augment" => Ok(SweepAxis::Augment),
            other => Err(HarnessError::Config(format!("unknown sweep axis `{other}` (K, window, views, augment)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::K => "K",
            SweepAxis::Window => "window",
            SweepAxis::Views => "views",
            SweepAxis::Augment => "augment",
        }
    }

    /// Returns `cfg` with this axis set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: &str) -> Result<ExperimentConfig, HarnessError> {
        let bad = || HarnessError::Config(format!("invalid {} value `{value}`", self.name()));
        let mut out = cfg.clone();
        match self {
            SweepAxis::K => out.tokenizer.k = value.trim().parse().map_err(|_| bad())?,
            SweepAxis::Window => {
                let w: f64 = value.trim().parse().map_err(|_| bad())?;
                if !(w > 0.0 && w.is_finite()) {
                    return Err(bad());
                }
                out.tokenizer.window_s = w;
            }
            SweepAxis::Views => out.tokenizer.views = Views::parse(value).ok_or_else(bad)?,
            SweepAxis::Augment => {
                out.augment.enabled = match value.trim() {
                    "on" | "true" => true,
                    "off" | "false" => false,
                    _ => return Err(bad()),
                }
            }
        }
        out.check()?;
        Ok(out)
    }
}

/// Per-metric trend across sweep values: the pooled means in sweep order
/// and the values at which they are smallest and largest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTrend {
    pub means: Vec<Option<f64>>,
    pub argmin: Option<String>,
    pub argmax: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub axis: String,
    pub split: String,
    pub values: Vec<String>,
    pub metrics: BTreeMap<String, MetricTrend>,
}

pub struct SweepOutcome {
    pub reports: Vec<(String, Report)>,
    /// One trend per split label.
    pub trends: Vec<Trend>,
}

fn trend(axis: SweepAxis, split: &str, reports: &[(String, Report)]) -> Trend {
    let names: std::collections::BTreeSet<&String> =
        reports.iter().filter_map(|(_, r)| r.summary.get(split)).flat_map(|m| m.keys()).collect();
    let values: Vec<String> = reports.iter().map(|(v, _)| v.clone()).collect();
    let mut metrics = BTreeMap::new();
    for name in names {
        let means: Vec<Option<f64>> = reports.iter().map(|(_, r)| r.metric(split, name).map(|s| s.mean)).collect();
        let present = || means.iter().enumerate().filter_map(|(i, m)| m.map(|m| (i, m)));
        // Earliest value wins ties.
        let argmin = present().fold(None, |b: Option<(usize, f64)>, (i, m)| match b {
            Some((_, bm)) if bm <= m => b,
            _ => Some((i, m)),
        });
        let argmax = present().fold(None, |b: Option<(usize, f64)>, (i, m)| match b {
            Some((_, bm)) if bm >= m => b,
            _ => Some((i, m)),
        });
        metrics.insert(
            name.clone(),
            MetricTrend {
                means,
                argmin: argmin.map(|(i, _)| values[i].clone()),
                argmax: argmax.map(|(i, _)| values[i].clone()),
            },
        );
    }
    Trend { axis: axis.name().to_string(), split: split.to_string(), values, metrics }
}

/// Runs the experiment once per axis value, sharing cached chunks and
/// features across values. With `out_dir`, writes `<axis>=<value>/report.*`
/// and `trend.json`.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    out_dir: Option<&Path>,
) -> Result<SweepOutcome, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one value".into()));
    }
    let configs = values.iter().map(|v| axis.apply(cfg, v)).collect::<Result<Vec<_>, _>>()?;
    let data = cfg.load_data()?;
    let mut engine = Engine::new(&data)?;
    let mut reports = Vec::with_capacity(values.len());
    for (v, c) in values.iter().zip(&configs) {
        let report = run_with(&mut engine, c, &data)?;
        if let Some(dir) = out_dir {
            report.write_to(&dir.join(format!("{}={}", axis.name(), v)))?;
        }
        reports.push((v.clone(), report));
    }
    let splits: Vec<String> = cfg.splits.iter().map(|s| s.label()).collect();
    let trends: Vec<Trend> = splits.iter().map(|s| trend(axis, s, &reports)).collect();
    if let Some(dir) = out_dir {
        let path = dir.join("trend.json");
        let text = serde_json::to_string_pretty(&trends).expect("trend serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(SweepOutcome { reports, trends })
}
