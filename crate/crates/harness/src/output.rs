//! Trace, summary and report files.
//!
//! `trace.csv` has a header row and one row per snapshot:
//! `k,theta_1..theta_d,pi_hat_1..pi_hat_m,sigma`. Floats use 17 significant
//! digits in scientific notation so every value reads back bit-exact.
//! `summary.json` and `report.json` rely on serde_json's shortest
//! round-trip float formatting.

use std::fs;
use std::path::{Path, PathBuf};

use samcmc::chain::fmt_f64;
use samcmc::trace::Snapshot;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::replicate::{EfficiencyReport, HarnessError, RunSummary};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn trace_csv(snapshots: &[Snapshot]) -> String {
    let (d, m) = snapshots
        .first()
        .map_or((0, 0), |s| (s.theta.len(), s.visit_freq.len()));
    let mut header = vec!["k".to_string()];
    header.extend((1..=d).map(|i| format!("theta_{i}")));
    header.extend((1..=m).map(|i| format!("pi_hat_{i}")));
    header.push("sigma".into());
    let mut out = header.join(",");
    out.push('\n');
    for s in snapshots {
        let mut row = vec![s.k.to_string()];
        row.extend(s.theta.iter().map(|v| fmt_f64(*v)));
        row.extend(s.visit_freq.iter().map(|v| fmt_f64(*v)));
        row.push(s.sigma.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_trace_csv(text: &str, origin: &str) -> Result<Vec<Snapshot>, HarnessError> {
    let bad = |line: usize, message: String| HarnessError::Format {
        path: origin.to_string(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "missing header".into()))?.split(',').collect();
    let d = header.iter().filter(|h| h.starts_with("theta_")).count();
    let m = header.iter().filter(|h| h.starts_with("pi_hat_")).count();
    if header.len() != d + m + 2 || header[0] != "k" || header[header.len() - 1] != "sigma" {
        return Err(bad(1, format!("unexpected header {header:?}")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(bad(i + 2, format!("expected {} fields, got {}", header.len(), fields.len())));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|e| bad(i + 2, format!("`{s}`: {e}")));
            Ok(Snapshot {
                k: fields[0].parse().map_err(|e| bad(i + 2, format!("k: {e}")))?,
                theta: fields[1..=d].iter().map(|s| float(s)).collect::<Result<_, _>>()?,
                visit_freq: fields[d + 1..=d + m].iter().map(|s| float(s)).collect::<Result<_, _>>()?,
                sigma: fields[d + m + 1].parse().map_err(|e| bad(i + 2, format!("sigma: {e}")))?,
            })
        })
        .collect()
}

pub fn write_trace(snapshots: &[Snapshot], path: &Path) -> Result<(), HarnessError> {
    fs::write(path, trace_csv(snapshots)).map_err(io_err(path))
}

pub fn read_trace(path: &Path) -> Result<Vec<Snapshot>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_trace_csv(&text, &path.display().to_string())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Writes `trace.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_run_outputs(snapshots: &[Snapshot], summary: &RunSummary, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let trace = dir.join(TRACE_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    write_trace(snapshots, &trace)?;
    write_json(summary, &summary_path)?;
    Ok(vec![trace, summary_path])
}

pub fn write_report(report: &EfficiencyReport, dir: &Path) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(REPORT_FILE);
    write_json(report, &path)?;
    Ok(path)
}
