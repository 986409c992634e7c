//! Record types and deterministic CSV/JSON emission.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::OutputFormat;
use crate::error::{CliError, CliResult};
use crate::percentiles::SummaryRow;

/// One scored quantity of one trial at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub algorithm: String,
    pub trial: usize,
    pub step: usize,
    pub metric: String,
    pub value: f64,
}

/// Sorts records into the canonical `(algorithm, trial, step, metric)` order
/// so output bytes never depend on scheduling.
pub fn canonical_sort(records: &mut [MetricRecord]) {
    records.sort_by(|a, b| {
        (&a.algorithm, a.trial, a.step, &a.metric).cmp(&(&b.algorithm, b.trial, b.step, &b.metric))
    });
}

pub fn write_records_csv<W: Write>(records: &[MetricRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "algorithm,trial,step,metric,value")?;
    for r in records {
        writeln!(w, "{},{},{},{},{}", r.algorithm, r.trial, r.step, r.metric, r.value)?;
    }
    Ok(())
}

pub fn write_records_json<W: Write>(records: &[MetricRecord], w: W) -> CliResult<()> {
    serde_json::to_writer_pretty(w, records)
        .map_err(|e| CliError::Config(format!("json serialization: {e}")))
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "algorithm,step,metric,quantile,value")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.algorithm, r.step, r.metric, r.quantile, r.value)?;
    }
    Ok(())
}

/// Parses a records CSV previously produced by [`write_records_csv`].
pub fn read_records_csv(text: &str) -> CliResult<Vec<MetricRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("algorithm,trial,step,metric,value") => {}
        other => {
            return Err(CliError::Config(format!(
                "records file: expected header `algorithm,trial,step,metric,value`, got {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::Config(format!(
                "records file line {}: expected 5 fields, got {}",
                idx + 2,
                fields.len()
            )));
        }
        let parse_err = |key: &str| {
            CliError::Config(format!("records file line {}: bad `{key}` field", idx + 2))
        };
        out.push(MetricRecord {
            algorithm: fields[0].to_string(),
            trial: fields[1].parse().map_err(|_| parse_err("trial"))?,
            step: fields[2].parse().map_err(|_| parse_err("step"))?,
            metric: fields[3].to_string(),
            value: fields[4].parse().map_err(|_| parse_err("value"))?,
        });
    }
    Ok(out)
}

/// Writes `records.csv` / `records.json` (per format) and `summary.csv` into
/// `out_dir`, after a canonical sort.
pub fn emit(
    records: &mut Vec<MetricRecord>,
    summary: &[SummaryRow],
    out_dir: &Path,
    format: OutputFormat,
) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)?;
    canonical_sort(records);
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        let f = std::fs::File::create(out_dir.join("records.csv"))?;
        write_records_csv(records, std::io::BufWriter::new(f))?;
    }
    if matches!(format, OutputFormat::Json | OutputFormat::Both) {
        let f = std::fs::File::create(out_dir.join("records.json"))?;
        write_records_json(records, std::io::BufWriter::new(f))?;
    }
    let f = std::fs::File::create(out_dir.join("summary.csv"))?;
    write_summary_csv(summary, std::io::BufWriter::new(f))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(algorithm: &str, trial: usize, step: usize, value: f64) -> MetricRecord {
        MetricRecord {
            algorithm: algorithm.into(),
            trial,
            step,
            metric: "rel_cost_err".into(),
            value,
        }
    }

    #[test]
    fn csv_round_trip() {
        let records = vec![rec("a", 0, 10, 0.25), rec("b", 3, 0, -1.5e-3)];
        let mut buf = Vec::new();
        write_records_csv(&records, &mut buf).unwrap();
        let parsed = read_records_csv(&String::from_utf8(buf).unwrap()).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn canonical_sort_is_total() {
        let mut records = vec![rec("b", 0, 0, 1.0), rec("a", 1, 5, 2.0), rec("a", 0, 9, 3.0)];
        canonical_sort(&mut records);
        assert_eq!(records[0].algorithm, "a");
        assert_eq!(records[0].trial, 0);
        assert_eq!(records[2].algorithm, "b");
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(read_records_csv("foo,bar\n").is_err());
    }
}
