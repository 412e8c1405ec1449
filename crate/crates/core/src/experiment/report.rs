use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiment::ExperimentConfig;

/// Final-time errors above this percentage mark a row as diverged.
pub const DIVERGENCE_THRESHOLD_PCT: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Rollout error above [`DIVERGENCE_THRESHOLD_PCT`] or not finite.
    Diverged,
    /// The loss became non-finite during training; no errors were measured.
    TrainingFailed,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Diverged => "diverged",
            RowStatus::TrainingFailed => "training_failed",
        }
    }

    pub fn classify(final_time_pct: f64) -> Self {
        if final_time_pct.is_finite() && final_time_pct <= DIVERGENCE_THRESHOLD_PCT {
            RowStatus::Ok
        } else {
            RowStatus::Diverged
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Split or case name; empty when the experiment has a single variant.
    pub variant: String,
    /// Hidden layers.
    pub layers: usize,
    /// Neurons per hidden layer.
    pub neurons: usize,
    pub one_step_pct: f64,
    pub final_time_pct: f64,
    pub test_realizations: usize,
    pub train_pairs: usize,
    pub status: RowStatus,
}

impl ReportRow {
    /// File-name stem for artifacts of this row.
    pub fn label(&self) -> String {
        let arch = format!("d{}_w{}", self.layers, self.neurons);
        if self.variant.is_empty() {
            arch
        } else {
            format!("{}_{arch}", self.variant)
        }
    }
}

/// Mean percentage errors over the test realizations, one row per trained
/// network (or per-step family).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub experiment: u8,
    pub rows: Vec<ReportRow>,
    pub config: ExperimentConfig,
    /// Derived seed of every random stream.
    pub seeds: BTreeMap<String, u64>,
}

impl ErrorReport {
    pub fn row(&self, variant: &str, layers: usize, neurons: usize) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.layers == layers && r.neurons == neurons)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,layers,neurons,one_step_pct,final_time_pct,test_realizations,train_pairs,status\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{},{},{}",
                r.variant,
                r.layers,
                r.neurons,
                r.one_step_pct,
                r.final_time_pct,
                r.test_realizations,
                r.train_pairs,
                r.status.as_str()
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("Experiment {}: mean L2 percentage error over test realizations\n\n", self.experiment);
        let variant_w = self.rows.iter().map(|r| r.variant.len()).max().unwrap_or(0).max(7);
        let _ = writeln!(
            s,
            "{:<variant_w$}  {:>6}  {:>7}  {:>12}  {:>12}  status",
            "variant", "layers", "neurons", "1-step", "final-time"
        );
        let _ = writeln!(s, "{}", "-".repeat(variant_w + 2 + 6 + 2 + 7 + 2 + 12 + 2 + 12 + 8));
        for r in &self.rows {
            let variant = if r.variant.is_empty() { "-" } else { &r.variant };
            let _ = writeln!(
                s,
                "{:<variant_w$}  {:>6}  {:>7}  {:>12}  {:>12}  {}",
                variant,
                r.layers,
                r.neurons,
                fmt_pct(r.one_step_pct),
                fmt_pct(r.final_time_pct),
                r.status.as_str()
            );
        }
        s
    }
}

fn fmt_pct(v: f64) -> String {
    if v.is_finite() && v.abs() < 1e4 {
        format!("{v:.4}")
    } else {
        format!("{v:.4e}")
    }
}

/// Writes `report.csv`, `report.txt` and `report.json` into `dir`.
pub fn emit_report(report: &ErrorReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let files = [
        ("report.csv", report.to_csv()),
        ("report.txt", report.to_text()),
        ("report.json", serde_json::to_string_pretty(report)? + "\n"),
    ];
    let mut paths = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        fs::write(&p, body)?;
        paths.push(p);
    }
    Ok(paths)
}
