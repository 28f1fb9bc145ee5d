use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::{CellSummary, ExperimentSummary};
use crate::error::{CabError, Result};

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    #[serde(rename = "U")]
    pub budget: String,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

impl From<&CellSummary> for SummaryRow {
    fn from(cell: &CellSummary) -> Self {
        Self {
            policy: cell.label.clone(),
            budget: cell.budget_label.clone(),
            mean: cell.mean,
            std: cell.std,
            trials: cell.trials,
        }
    }
}

pub fn summary_csv(summary: &ExperimentSummary) -> String {
    let mut out = String::from("policy,U,mean,std,trials\n");
    for cell in &summary.cells {
        writeln!(
            out,
            "{},{},{:.2},{:.2},{}",
            cell.label, cell.budget_label, cell.mean, cell.std, cell.trials
        )
        .unwrap();
    }
    out
}

/// `t,mean_reward,mean_cum_regret`, one row per step; regret is empty for datasets.
pub fn curve_csv(cell: &CellSummary) -> String {
    let mut out = String::from("t,mean_reward,mean_cum_regret\n");
    for (t, reward) in cell.reward_curve.iter().enumerate() {
        match &cell.regret_curve {
            Some(r) => writeln!(out, "{},{:.6},{:.6}", t + 1, reward, r[t]).unwrap(),
            None => writeln!(out, "{},{:.6},", t + 1, reward).unwrap(),
        }
    }
    out
}

pub fn curve_file_name(cell: &CellSummary) -> String {
    format!("{}_{}.csv", cell.label, cell.budget_label)
}

/// Plain-text log of the run; contains no timestamps so reruns are identical.
pub fn run_log(config: &ExperimentConfig, summary: &ExperimentSummary) -> String {
    let mut out = String::new();
    writeln!(out, "horizon {}", summary.horizon).unwrap();
    writeln!(out, "trials {}", summary.trials).unwrap();
    writeln!(out, "seed {}", config.seed).unwrap();
    if summary.rejected_rows > 0 {
        writeln!(out, "rejected rows {}", summary.rejected_rows).unwrap();
    }
    for cell in &summary.cells {
        write!(
            out,
            "{} U={} (resolved {}): mean {:.4} std {:.4} over {} trials",
            cell.label, cell.budget_label, cell.budget, cell.mean, cell.std, cell.trials
        )
        .unwrap();
        if let Some(r) = &cell.regret {
            write!(
                out,
                "; regret {:.4} (arm {:.4}, feature {:.4})",
                r.mean, r.mean_arm, r.mean_feature
            )
            .unwrap();
        }
        out.push('\n');
        for (trial, err) in &cell.failures {
            writeln!(out, "  trial {trial} failed: {err}").unwrap();
        }
    }
    // Output location and thread count do not affect results, so they stay out
    // of the log to keep it identical across reruns.
    writeln!(out, "--- config ---").unwrap();
    for line in config.to_toml_string().lines() {
        if !(line.starts_with("out_dir =") || line.starts_with("jobs =")) {
            writeln!(out, "{line}").unwrap();
        }
    }
    out
}

/// Writes `summary.csv`, `runlog.txt` and `curves/` into `dir`.
///
/// Files are written to a staging directory first and moved into place once
/// all of them exist, so a failure never leaves a half-written result set.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, summary: &ExperimentSummary) -> Result<()> {
    let mut files: Vec<(PathBuf, String)> = vec![
        (PathBuf::from("summary.csv"), summary_csv(summary)),
        (PathBuf::from("runlog.txt"), run_log(config, summary)),
    ];
    for cell in &summary.cells {
        if !cell.reward_curve.is_empty() {
            files.push((Path::new("curves").join(curve_file_name(cell)), curve_csv(cell)));
        }
    }

    fs::create_dir_all(dir)?;
    let staging = dir.join(".staging");
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    let staged = (|| -> Result<()> {
        fs::create_dir_all(staging.join("curves"))?;
        for (name, text) in &files {
            fs::write(staging.join(name), text)?;
        }
        Ok(())
    })();
    if let Err(e) = staged {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    fs::create_dir_all(dir.join("curves"))?;
    for (name, _) in &files {
        fs::rename(staging.join(name), dir.join(name))?;
    }
    fs::remove_dir_all(&staging)?;
    Ok(())
}

pub fn read_summary(dir: &Path) -> Result<Vec<SummaryRow>> {
    let path = dir.join("summary.csv");
    if !path.is_file() {
        return Err(CabError::Config(format!("{} not found", path.display())));
    }
    let mut reader = csv::Reader::from_path(&path)?;
    reader
        .deserialize()
        .map(|row| row.map_err(CabError::from))
        .collect()
}

/// Aligned text table of summary rows.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let width = rows.iter().map(|r| r.policy.len()).max().unwrap_or(0).max(6);
    let budget_width = rows.iter().map(|r| r.budget.len()).max().unwrap_or(0).max(3);
    let mut out = String::new();
    writeln!(
        out,
        "{:<width$}  {:>budget_width$}  {:>8}  {:>8}  {:>6}",
        "policy", "U", "mean", "std", "trials"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<width$}  {:>budget_width$}  {:>8.2}  {:>8.2}  {:>6}",
            r.policy, r.budget, r.mean, r.std, r.trials
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::Variant;

    fn cell(label: &str, mean: f64) -> CellSummary {
        CellSummary {
            label: label.into(),
            variant: Variant::Cats,
            budget_label: "0.4".into(),
            budget: 2,
            trials: 200,
            failures: vec![],
            mean,
            std: 2.3649,
            reward_curve: vec![50.0, 75.0],
            regret_curve: None,
            regret: None,
        }
    }

    #[test]
    fn summary_format() {
        let summary = ExperimentSummary {
            horizon: 2,
            trials: 200,
            rejected_rows: 0,
            cells: vec![cell("CATS", 72.5812)],
        };
        assert_eq!(
            summary_csv(&summary),
            "policy,U,mean,std,trials\nCATS,0.4,72.58,2.36,200\n"
        );
        let empty = ExperimentSummary { cells: vec![], ..summary };
        assert_eq!(summary_csv(&empty), "policy,U,mean,std,trials\n");
    }

    #[test]
    fn curve_has_one_row_per_step() {
        let text = curve_csv(&cell("CATS", 1.0));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().nth(2), Some("2,75.000000,"));
    }

    #[test]
    fn summary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let summary = ExperimentSummary {
            horizon: 2,
            trials: 200,
            rejected_rows: 0,
            cells: vec![cell("CATS", 72.5812), cell("TSRC", 60.0)],
        };
        fs::write(dir.path().join("summary.csv"), summary_csv(&summary)).unwrap();
        let rows = read_summary(dir.path()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].policy, "CATS");
        assert_eq!(rows[0].mean, 72.58);
        assert!(format_table(&rows).contains("TSRC"));
        assert!(read_summary(&dir.path().join("missing")).is_err());
    }
}
