//! `report`: one comparison row per method across run summaries.

use std::path::{Path, PathBuf};

use crate::config::ExperimentKind;
use crate::summary::RunSummary;
use crate::CliError;

pub const COLUMNS: [&str; 10] = [
    "summary",
    "method",
    "runs",
    "failures",
    "final_residual",
    "l0",
    "support_error",
    "fit",
    "success_rate",
    "res_stat",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: ExperimentKind,
    pub rows: Vec<Vec<String>>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3e}"))
}

fn plain(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

pub fn load_summary(path: &Path) -> Result<RunSummary, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    RunSummary::from_json(&text).map_err(|e| {
        CliError::Config(format!(
            "{}:{}:{}: not a run summary: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

/// Builds the table; all summaries must come from the same experiment.
pub fn build_report(summaries: &[(String, RunSummary)]) -> Result<Report, CliError> {
    let (_, first) = summaries
        .first()
        .ok_or_else(|| CliError::Config("report needs at least one summary file".into()))?;
    let experiment = first.experiment;
    if let Some((label, other)) = summaries.iter().find(|(_, s)| s.experiment != experiment) {
        return Err(CliError::Config(format!(
            "cannot compare experiments: {} is {}, {} is {}",
            summaries[0].0, experiment, label, other.experiment
        )));
    }
    if experiment == ExperimentKind::Certify {
        return Err(CliError::Config(
            "certify summaries have no method rows to compare".into(),
        ));
    }
    let mut rows = Vec::new();
    for (label, s) in summaries {
        for m in &s.methods {
            let a = &m.aggregate;
            // feasibility for runs without a problem-specific residual
            let residual = a.mean_final_residual.or(a.mean_res_feas);
            rows.push(vec![
                label.clone(),
                m.method.to_string(),
                a.runs.to_string(),
                a.failures.to_string(),
                cell(residual),
                plain(a.mean_l0),
                plain(a.mean_support_error),
                plain(a.mean_fit),
                plain(a.success_rate),
                cell(a.mean_res_stat),
            ]);
        }
    }
    Ok(Report { experiment, rows })
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
        for row in &self.rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: Vec<&str>| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i < 2 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = format!("experiment: {}\n", self.experiment);
        out.push_str(&line(COLUMNS.to_vec()));
        for row in &self.rows {
            out.push_str(&line(row.iter().map(String::as_str).collect()));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = COLUMNS.join(",") + "\n";
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| {
                    if c.contains([',', '"']) {
                        format!("\"{}\"", c.replace('"', "\"\""))
                    } else {
                        c.clone()
                    }
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Reads the summaries and writes the table as CSV to `csv`.
pub fn cmd_report(paths: &[PathBuf], csv: &Path) -> Result<Report, CliError> {
    let summaries = paths
        .iter()
        .map(|p| load_summary(p).map(|s| (p.display().to_string(), s)))
        .collect::<Result<Vec<_>, _>>()?;
    let report = build_report(&summaries)?;
    if let Some(parent) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(csv, report.to_csv()).map_err(|e| CliError::io(csv, e))?;
    Ok(report)
}
