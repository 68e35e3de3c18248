//! Serialized forms of experiment results: summary tables and raw traces,
//! as CSV or JSON.

use std::io::{Read, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use shrinkcov::sim::{ExperimentSummary, TraceRecord, RNG_NAME};
use shrinkcov::{ExperimentConfig, Variant};

pub const SUMMARY_HEADER: [&str; 10] = [
    "variant",
    "n",
    "median",
    "q25",
    "q75",
    "whisker_lo",
    "whisker_hi",
    "n_outliers",
    "mean",
    "diverged_count",
];

pub const RAW_HEADER: [&str; 5] = ["variant", "trial", "n", "error", "diverged"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Summary,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub kind: RecordKind,
    /// Seconds since the Unix epoch; informational only.
    pub timestamp: u64,
    pub rng: String,
    /// Absent when the records were pooled from other files.
    pub config: Option<ExperimentConfig>,
}

impl Metadata {
    pub fn new(kind: RecordKind, config: Option<ExperimentConfig>) -> Self {
        Self {
            tool: "shrinkcov".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            kind,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            rng: RNG_NAME.into(),
            config,
        }
    }
}

/// One `(variant, n)` row of a summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub n: usize,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    pub whisker_lo: Option<f64>,
    pub whisker_hi: Option<f64>,
    pub n_outliers: usize,
    pub mean: Option<f64>,
    pub diverged_count: usize,
}

pub fn summary_rows(summary: &ExperimentSummary) -> Vec<SummaryRow> {
    summary
        .variants
        .iter()
        .flat_map(|vs| {
            vs.steps.iter().map(move |step| {
                let stats = step.stats.as_ref();
                SummaryRow {
                    variant: vs.variant,
                    n: step.n,
                    median: stats.map(|s| s.median),
                    q25: stats.map(|s| s.q25),
                    q75: stats.map(|s| s.q75),
                    whisker_lo: stats.map(|s| s.whisker_low),
                    whisker_hi: stats.map(|s| s.whisker_high),
                    n_outliers: stats.map_or(0, |s| s.outliers.len()),
                    mean: step.mean,
                    diverged_count: step.diverged_count,
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub metadata: Metadata,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawOutput {
    pub metadata: Metadata,
    pub records: Vec<TraceRecord>,
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.variant.name().to_string(),
            r.n.to_string(),
            fmt_opt(r.median),
            fmt_opt(r.q25),
            fmt_opt(r.q75),
            fmt_opt(r.whisker_lo),
            fmt_opt(r.whisker_hi),
            r.n_outliers.to_string(),
            fmt_opt(r.mean),
            r.diverged_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_raw_csv<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RAW_HEADER)?;
    for r in records {
        w.write_record([
            r.variant.name().to_string(),
            r.trial.to_string(),
            r.n.to_string(),
            fmt_opt(r.error),
            u8::from(r.diverged).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(idx).unwrap_or_default();
    raw.parse()
        .map_err(|e| anyhow::anyhow!("line {line}: invalid {} '{raw}': {e}", RAW_HEADER[idx]))
}

/// Parses raw trace records from CSV (with [`RAW_HEADER`]) or from a JSON
/// [`RawOutput`] document.
pub fn read_raw<R: Read>(mut input: R) -> Result<Vec<TraceRecord>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    if text.trim_start().starts_with('{') {
        let doc: RawOutput = serde_json::from_str(&text).context("schema mismatch: not a raw trace JSON document")?;
        if doc.metadata.kind != RecordKind::Raw {
            bail!("schema mismatch: JSON document holds {:?} records, expected raw traces", doc.metadata.kind);
        }
        return Ok(doc.records);
    }

    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(RAW_HEADER) {
        bail!(
            "schema mismatch: expected header '{}', found '{}'",
            RAW_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        );
    }
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.context("schema mismatch")?;
        let line = rec.position().map_or(0, |p| p.line());
        let error = match rec.get(3).unwrap_or_default() {
            "" => None,
            _ => Some(parse_field::<f64>(&rec, 3, line)?),
        };
        let diverged = match rec.get(4).unwrap_or_default() {
            "0" => false,
            "1" => true,
            other => bail!("line {line}: invalid diverged flag '{other}'"),
        };
        records.push(TraceRecord {
            variant: parse_field(&rec, 0, line)?,
            trial: parse_field(&rec, 1, line)?,
            n: parse_field(&rec, 2, line)?,
            error,
            diverged,
        });
    }
    Ok(records)
}
