//! Experiment reports and their CSV/JSON serializations.
//!
//! Reports must be reproducible byte-for-byte from identical configs and
//! seeds, so nothing time-dependent goes into the files; wall times are
//! logged to stderr by the CLI instead. Numbers are written with 17
//! significant decimal digits, which round-trips every f64 exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};

/// One report cell: a statistic aggregated over the configured trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub task: String,
    pub level: String,
    pub central_epsilon: f64,
    pub local_epsilon: f64,
    /// Accuracy kind: clean / private / semi_private / benchmark curves.
    pub kind: String,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
    /// The per-cell derived seeds, joined with '+'.
    pub seeds: String,
    /// Feature/label budget split actually consumed per record.
    pub epsilon_x: f64,
    pub epsilon_y: f64,
    /// Empty on success; failure description for cells that were skipped.
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub metadata: BTreeMap<String, String>,
}

pub const CSV_COLUMNS: [&str; 12] = [
    "task",
    "level",
    "central_epsilon",
    "local_epsilon",
    "kind",
    "mean",
    "std",
    "trials",
    "seeds",
    "epsilon_x",
    "epsilon_y",
    "note",
];

/// 17-significant-digit decimal form; infinities spelled `inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| CliError::validation(format!("bad numeric field {s:?}")))
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

impl RunReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        // metadata as comment lines so the CSV body stays machine-readable
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "{}", CSV_COLUMNS.join(","));
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                row.task,
                row.level,
                fmt_f64(row.central_epsilon),
                fmt_f64(row.local_epsilon),
                row.kind,
                fmt_f64(row.mean),
                fmt_f64(row.std),
                row.trials,
                row.seeds,
                fmt_f64(row.epsilon_x),
                fmt_f64(row.epsilon_y),
                row.note.replace(',', ";"),
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<RunReport> {
        let mut report = RunReport::default();
        let mut saw_header = false;
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some((k, v)) = rest.split_once(" = ") {
                    report.metadata.insert(k.to_string(), v.to_string());
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !saw_header {
                if line != CSV_COLUMNS.join(",") {
                    return Err(CliError::validation(format!("unexpected CSV header {line:?}")));
                }
                saw_header = true;
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != CSV_COLUMNS.len() {
                return Err(CliError::validation(format!(
                    "expected {} CSV cells, found {}",
                    CSV_COLUMNS.len(),
                    cells.len()
                )));
            }
            report.rows.push(ReportRow {
                task: cells[0].to_string(),
                level: cells[1].to_string(),
                central_epsilon: parse_f64(cells[2])?,
                local_epsilon: parse_f64(cells[3])?,
                kind: cells[4].to_string(),
                mean: parse_f64(cells[5])?,
                std: parse_f64(cells[6])?,
                trials: cells[7]
                    .parse()
                    .map_err(|_| CliError::validation("bad trials field"))?,
                seeds: cells[8].to_string(),
                epsilon_x: parse_f64(cells[9])?,
                epsilon_y: parse_f64(cells[10])?,
                note: cells[11].to_string(),
            });
        }
        if !saw_header {
            return Err(CliError::validation("missing CSV header"));
        }
        Ok(report)
    }

    /// JSON mirror of the CSV fields. Numbers are carried as the same
    /// 17-significant-digit strings so infinities serialize cleanly and the
    /// two formats agree byte-for-byte on values.
    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "task": r.task,
                    "level": r.level,
                    "central_epsilon": fmt_f64(r.central_epsilon),
                    "local_epsilon": fmt_f64(r.local_epsilon),
                    "kind": r.kind,
                    "mean": fmt_f64(r.mean),
                    "std": fmt_f64(r.std),
                    "trials": r.trials,
                    "seeds": r.seeds,
                    "epsilon_x": fmt_f64(r.epsilon_x),
                    "epsilon_y": fmt_f64(r.epsilon_y),
                    "note": r.note,
                })
            })
            .collect();
        let value = serde_json::json!({
            "metadata": self.metadata,
            "rows": rows,
        });
        serde_json::to_string_pretty(&value).expect("report JSON is serializable")
    }

    pub fn from_json(text: &str) -> Result<RunReport> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::validation(format!("bad report JSON: {e}")))?;
        let mut report = RunReport::default();
        if let Some(meta) = value.get("metadata").and_then(|m| m.as_object()) {
            for (k, v) in meta {
                report
                    .metadata
                    .insert(k.clone(), v.as_str().unwrap_or_default().to_string());
            }
        }
        let rows = value
            .get("rows")
            .and_then(|r| r.as_array())
            .ok_or_else(|| CliError::validation("report JSON lacks rows"))?;
        for r in rows {
            let s = |key: &str| -> Result<String> {
                r.get(key)
                    .and_then(|v| v.as_str())
                    .map(|v| v.to_string())
                    .ok_or_else(|| CliError::validation(format!("row lacks field {key}")))
            };
            report.rows.push(ReportRow {
                task: s("task")?,
                level: s("level")?,
                central_epsilon: parse_f64(&s("central_epsilon")?)?,
                local_epsilon: parse_f64(&s("local_epsilon")?)?,
                kind: s("kind")?,
                mean: parse_f64(&s("mean")?)?,
                std: parse_f64(&s("std")?)?,
                trials: r
                    .get("trials")
                    .and_then(|v| v.as_u64())
                    .ok_or_else(|| CliError::validation("row lacks trials"))?
                    as usize,
                seeds: s("seeds")?,
                epsilon_x: parse_f64(&s("epsilon_x")?)?,
                epsilon_y: parse_f64(&s("epsilon_y")?)?,
                note: s("note")?,
            });
        }
        Ok(report)
    }

    pub fn write(&self, path: &Path, format: ReportFormat) -> Result<()> {
        let text = match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
        };
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(CliError::validation(format!(
                "unknown report format {other:?} (expected csv or json)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> RunReport {
        let mut metadata = BTreeMap::new();
        metadata.insert("task".into(), "data_collection".into());
        metadata.insert(
            "paper_anchor_clean_subset".into(),
            "0.561".into(),
        );
        RunReport {
            rows: vec![
                ReportRow {
                    task: "data_collection".into(),
                    level: "latent".into(),
                    central_epsilon: f64::INFINITY,
                    local_epsilon: 10.0,
                    kind: "clean".into(),
                    mean: 0.123456789012345678,
                    std: 0.01,
                    trials: 3,
                    seeds: "11+12+13".into(),
                    epsilon_x: 7.0,
                    epsilon_y: 3.0,
                    note: String::new(),
                },
                ReportRow {
                    task: "data_collection".into(),
                    level: "latent".into(),
                    central_epsilon: 5.0,
                    local_epsilon: 1.0,
                    kind: "private".into(),
                    mean: 1.0 / 3.0,
                    std: f64::MIN_POSITIVE,
                    trials: 3,
                    seeds: "11+12+13".into(),
                    epsilon_x: 0.7,
                    epsilon_y: 0.3,
                    note: "accountant budget infeasible".into(),
                },
            ],
            metadata,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let report = sample_report();
        let parsed = RunReport::from_csv(&report.to_csv()).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let report = sample_report();
        let parsed = RunReport::from_json(&report.to_json()).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn empty_report_is_header_only() {
        let report = RunReport::default();
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(csv.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(RunReport::from_csv(&csv).unwrap(), report);
    }

    #[test]
    fn sample_std_uses_n_minus_one() {
        let vals = [0.5, 0.6, 0.7];
        // sample variance of these three is 0.01
        assert!((sample_std(&vals) - 0.1).abs() < 1e-12);
        assert_eq!(sample_std(&[0.5]), 0.0);
    }

    #[test]
    fn extreme_floats_survive_both_formats() {
        let values = [
            f64::MIN_POSITIVE,
            f64::MAX,
            -0.0,
            1e-300,
            0.1 + 0.2,
            f64::INFINITY,
        ];
        for &v in &values {
            let parsed = parse_f64(&fmt_f64(v)).unwrap();
            assert!(parsed == v || (parsed.is_nan() && v.is_nan()), "{v}");
        }
    }
}
