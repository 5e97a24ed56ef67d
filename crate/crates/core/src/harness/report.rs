use std::collections::BTreeMap;

use super::{Report, METRICS};
use crate::util::format_sig;

fn cell(mean: f64, std: f64) -> String {
    format!("{} ± {}", format_sig(mean, 4), format_sig(std, 2))
}

/// Plain-text rendering: one row per split with `mean ± std` per metric,
/// then per-fold notes and warnings.
pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "dataset {}  sessions {}  segments {}  subjects {}\n",
        r.dataset.fingerprint, r.dataset.sessions, r.dataset.segments, r.dataset.subjects
    ));
    let t = &r.config.tokenizer;
    out.push_str(&format!(
        "seed {}  repetitions {}  K {}  window {}s  overlap {}  d {}  views {}  augment {}\n",
        r.config.seed,
        r.config.repetitions,
        t.k,
        format_sig(t.window_s, 6),
        format_sig(t.overlap, 6),
        t.d,
        t.views.label(),
        if r.config.augment.enabled { "on" } else { "off" }
    ));
    out.push_str(&format!("values are mean ± std over folds and repetitions (std denominator {})\n\n", r.std_denominator));

    let mut header = vec!["split".to_string(), "folds".to_string()];
    header.extend(METRICS.iter().map(|m| m.to_string()));
    let mut rows = vec![header];
    for (label, metrics) in &r.summary {
        let folds = r.folds.iter().filter(|f| &f.split == label).count();
        let mut row = vec![label.clone(), folds.to_string()];
        for m in METRICS {
            row.push(metrics.get(m).map_or_else(|| "-".to_string(), |s| cell(s.mean, s.std)));
        }
        rows.push(row);
    }
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    for row in &rows {
        let line: Vec<String> =
            row.iter().zip(&widths).map(|(v, &w)| format!("{v}{}", " ".repeat(w - v.chars().count()))).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }

    let mut presence: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for f in &r.folds {
        let e = presence.entry(f.split.as_str()).or_default();
        for (set, n) in &f.test_presence {
            *e.entry(set.as_str()).or_default() += n;
        }
    }
    out.push_str("\ntest position sets\n");
    for (split, sets) in &presence {
        let parts: Vec<String> = sets.iter().map(|(s, n)| format!("{s} x{n}")).collect();
        out.push_str(&format!("  {split}: {}\n", parts.join(", ")));
    }

    out.push_str("\nfolds\n");
    for f in &r.folds {
        out.push_str(&format!(
            "  {} rep {} fold {} ({})  train {}  test {}  fit {}",
            f.split, f.repetition, f.fold, f.held_out_subject, f.train_fingerprint, f.test_fingerprint,
            f.fit_fingerprints.codebook
        ));
        for (k, v) in &f.notes {
            out.push_str(&format!("  {k}: {v}"));
        }
        out.push('\n');
        for w in &f.warnings {
            out.push_str(&format!("    warning: {w}\n"));
        }
    }
    out
}
