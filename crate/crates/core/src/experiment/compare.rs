use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::stats::{mean, sample_std_dev};

pub const COLUMNS: [&str; 3] = ["ROUGE-L", "BLEU", "METEOR"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub n_runs: usize,
    pub mean: [f64; 3],
    /// Sample standard deviation across runs; zero for a single run.
    pub std: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub label: String,
    pub versus: String,
    /// Relative change of the mean in percent; `None` when the reference mean is zero.
    pub percent: [Option<f64>; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub eval_fingerprint: String,
    pub rows: Vec<ComparisonRow>,
    pub gains: Vec<GainRow>,
}

fn columns(r: &MetricReport) -> [f64; 3] {
    [r.rouge_l, r.bleu4, r.meteor]
}

pub fn percent_gain(base: f64, value: f64) -> Option<f64> {
    (base != 0.0).then(|| 100.0 * (value - base) / base)
}

/// One row per label (mean ± std over its reports) and a gain row for every
/// label after the first, relative to the first.
pub fn compare_runs(groups: &[(String, Vec<MetricReport>)]) -> Result<ComparisonTable> {
    let first = groups
        .iter()
        .flat_map(|(_, rs)| rs.first())
        .next()
        .ok_or_else(|| Error::Empty("no reports to compare".into()))?;
    let fingerprint = first.eval_fingerprint.clone();
    let mut rows = Vec::with_capacity(groups.len());
    for (label, reports) in groups {
        if reports.is_empty() {
            return Err(Error::Empty(format!("no reports for `{label}`")));
        }
        if let Some(r) = reports.iter().find(|r| r.eval_fingerprint != fingerprint) {
            return Err(Error::Incomparable(format!(
                "`{}` was scored with {} but `{}` with {}",
                r.label, r.eval_fingerprint, first.label, fingerprint
            )));
        }
        let mut row = ComparisonRow {
            label: label.clone(),
            n_runs: reports.len(),
            mean: [0.0; 3],
            std: [0.0; 3],
        };
        for c in 0..3 {
            let xs: Vec<f64> = reports.iter().map(|r| columns(r)[c]).collect();
            row.mean[c] = mean(&xs);
            row.std[c] = sample_std_dev(&xs);
        }
        rows.push(row);
    }
    let gains = rows
        .iter()
        .skip(1)
        .map(|row| GainRow {
            label: row.label.clone(),
            versus: rows[0].label.clone(),
            percent: [0, 1, 2].map(|c| percent_gain(rows[0].mean[c], row.mean[c])),
        })
        .collect();
    Ok(ComparisonTable {
        eval_fingerprint: fingerprint,
        rows,
        gains,
    })
}

fn fmt_gain(g: Option<f64>) -> String {
    g.map_or_else(|| "n/a".to_string(), |v| format!("{v:+.1}%"))
}

impl ComparisonTable {
    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .chain(self.gains.iter().map(|g| g.label.len() + 5))
            .max()
            .unwrap_or(0)
            .max(8);
        let mut out = format!("{:<width$}", "");
        for c in COLUMNS {
            let _ = write!(out, " {c:>16}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<width$}", r.label);
            for c in 0..3 {
                let cell = if r.n_runs > 1 {
                    format!("{:.2} ± {:.2}", r.mean[c], r.std[c])
                } else {
                    format!("{:.2}", r.mean[c])
                };
                let _ = write!(out, " {cell:>16}");
            }
            out.push('\n');
        }
        for g in &self.gains {
            let _ = write!(out, "{:<width$}", format!("gain {}", g.label));
            for p in g.percent {
                let _ = write!(out, " {:>16}", fmt_gain(p));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "eval fingerprint: {}", self.eval_fingerprint);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,versus,n_runs,rouge_l,rouge_l_std,bleu4,bleu4_std,meteor,meteor_std\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},,{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
                r.label, r.n_runs, r.mean[0], r.std[0], r.mean[1], r.std[1], r.mean[2], r.std[2]
            );
        }
        for g in &self.gains {
            let cell = |p: Option<f64>| p.map_or_else(String::new, |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "gain:{},{},,{},,{},,{},",
                g.label,
                g.versus,
                cell(g.percent[0]),
                cell(g.percent[1]),
                cell(g.percent[2])
            );
        }
        out
    }
}
