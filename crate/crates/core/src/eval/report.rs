//! CSV reports with one row per sweep configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "config,wer,stddev,wall_time_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Configuration fingerprint; never contains a comma.
    pub config: String,
    /// Mean WER over seeds (percent).
    pub wer: f64,
    /// Standard deviation over seeds (percent).
    pub stddev: f64,
    pub wall_time_s: f64,
}

/// CSV body in row order. Fails on an empty row list, a fingerprint holding
/// a comma or newline, or a negative or non-finite value.
pub fn format_report(rows: &[ResultRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("eval", "no rows to report"));
    }
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        if r.config.contains([',', '\n', '\r']) {
            return Err(Error::invalid("eval", format!("config fingerprint {:?} holds a separator", r.config)));
        }
        for (name, v) in [("wer", r.wer), ("stddev", r.stddev), ("wall_time_s", r.wall_time_s)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid("eval", format!("{name} = {v} in row {}", r.config)));
            }
        }
        let _ = writeln!(out, "{},{:.4},{:.4},{:.3}", r.config, r.wer, r.stddev, r.wall_time_s);
    }
    Ok(out)
}

pub fn emit_report(rows: &[ResultRow], path: &Path) -> Result<()> {
    let body = format_report(rows)?;
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Parses a report written by [`emit_report`].
pub fn parse_report(text: &str, name: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(Error::format(name, 1, "missing report header"));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::format(name, i + 2, "bad number"));
            if f.len() != 4 {
                return Err(Error::format(name, i + 2, "expected four fields"));
            }
            Ok(ResultRow {
                config: f[0].to_string(),
                wer: num(f[1])?,
                stddev: num(f[2])?,
                wall_time_s: num(f[3])?,
            })
        })
        .collect()
}
