//! Per-epoch CSV traces.
//!
//! A trace file starts with the generating config, one `# key = value` line
//! each, followed by a column-name row and one row per epoch. Times are
//! integer nanoseconds; reals use the shortest text that parses back to the
//! same `f64`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig};
use crate::policy::{ActionKind, PolicyKind};
use crate::session::EpochRecord;
use crate::time::Timestamp;

pub const COLUMNS: [&str; 16] = [
    "run_id",
    "policy",
    "k",
    "t_start_ns",
    "t_end_ns",
    "avg_age_ns",
    "peak_age_ns",
    "avg_backlog",
    "lambda",
    "epoch_len_ns",
    "action",
    "rtt_bar_ns",
    "z_bar_ns",
    "clamped",
    "zeta",
    "true_avg_age_ns",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("column {index}: expected '{expected}', found '{found}'")]
    Schema { index: usize, expected: &'static str, found: String },
    #[error("row {row}, column '{column}': cannot parse '{value}'")]
    Field { row: usize, column: &'static str, value: String },
    #[error("row {row} has {found} fields, expected {}", COLUMNS.len())]
    Width { row: usize, found: usize },
    #[error("embedded config: {0}")]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub run_id: String,
    pub policy: PolicyKind,
    pub k: u64,
    pub t_start_ns: u64,
    pub t_end_ns: u64,
    pub avg_age_ns: f64,
    pub peak_age_ns: u64,
    pub avg_backlog: f64,
    pub lambda: f64,
    pub epoch_len_ns: u64,
    pub action: Option<ActionKind>,
    pub rtt_bar_ns: f64,
    pub z_bar_ns: Option<f64>,
    pub clamped: bool,
    pub zeta: u32,
    pub true_avg_age_ns: Option<f64>,
}

impl TraceRow {
    pub fn from_record(run_id: &str, policy: PolicyKind, r: &EpochRecord) -> Self {
        TraceRow {
            run_id: run_id.to_string(),
            policy,
            k: r.k,
            t_start_ns: r.t_start.as_nanos(),
            t_end_ns: r.t_end.as_nanos(),
            avg_age_ns: r.avg_age_ns,
            peak_age_ns: r.peak_age_ns,
            avg_backlog: r.avg_backlog,
            lambda: r.lambda,
            epoch_len_ns: r.epoch_len_ns(),
            action: r.action,
            rtt_bar_ns: r.rtt_bar_ns,
            z_bar_ns: r.z_bar_ns,
            clamped: r.clamped,
            zeta: r.zeta,
            true_avg_age_ns: r.true_avg_age_ns,
        }
    }

    pub fn t_end(&self) -> Timestamp {
        Timestamp::from_nanos(self.t_end_ns)
    }

    fn fields(&self) -> [String; 16] {
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        [
            self.run_id.clone(),
            self.policy.to_string(),
            self.k.to_string(),
            self.t_start_ns.to_string(),
            self.t_end_ns.to_string(),
            self.avg_age_ns.to_string(),
            self.peak_age_ns.to_string(),
            self.avg_backlog.to_string(),
            self.lambda.to_string(),
            self.epoch_len_ns.to_string(),
            self.action.map_or(String::new(), |a| a.to_string()),
            self.rtt_bar_ns.to_string(),
            opt(self.z_bar_ns),
            u8::from(self.clamped).to_string(),
            self.zeta.to_string(),
            opt(self.true_avg_age_ns),
        ]
    }
}

pub fn rows_from_records(run_id: &str, policy: PolicyKind, records: &[EpochRecord]) -> Vec<TraceRow> {
    records.iter().map(|r| TraceRow::from_record(run_id, policy, r)).collect()
}

/// Serializes a trace to bytes.
pub fn encode_trace(cfg: &ExperimentConfig, rows: &[TraceRow]) -> Result<Vec<u8>, TraceError> {
    let mut out = Vec::new();
    for line in cfg.to_text().lines() {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.into_inner().map_err(|e| TraceError::Io(e.into_error()))
}

pub fn write_trace(path: &Path, cfg: &ExperimentConfig, rows: &[TraceRow]) -> Result<(), TraceError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode_trace(cfg, rows)?)?;
    Ok(())
}

/// Parses a trace, returning the embedded config and the rows.
pub fn decode_trace(bytes: &[u8]) -> Result<(ExperimentConfig, Vec<TraceRow>), TraceError> {
    let text = std::str::from_utf8(bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    let header: String = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| format!("{}\n", l.trim_start_matches('#').trim_start()))
        .collect();
    let cfg = ExperimentConfig::parse(&header)?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_reader(bytes);
    let names = r.headers()?.clone();
    for (index, expected) in COLUMNS.iter().enumerate() {
        let found = names.get(index).unwrap_or("");
        if found != *expected {
            return Err(TraceError::Schema { index, expected, found: found.to_string() });
        }
    }
    if names.len() != COLUMNS.len() {
        return Err(TraceError::Schema { index: COLUMNS.len(), expected: "end of row", found: names[COLUMNS.len()].into() });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != COLUMNS.len() {
            return Err(TraceError::Width { row, found: rec.len() });
        }
        let field = |c: usize| rec.get(c).expect("width checked");
        let err = |c: usize| TraceError::Field { row, column: COLUMNS[c], value: field(c).to_string() };
        let num = |c: usize| field(c).parse::<u64>().map_err(|_| err(c));
        let real = |c: usize| field(c).parse::<f64>().map_err(|_| err(c));
        let opt_real = |c: usize| if field(c).is_empty() { Ok(None) } else { real(c).map(Some) };
        rows.push(TraceRow {
            run_id: field(0).to_string(),
            policy: field(1).parse().map_err(|_| err(1))?,
            k: num(2)?,
            t_start_ns: num(3)?,
            t_end_ns: num(4)?,
            avg_age_ns: real(5)?,
            peak_age_ns: num(6)?,
            avg_backlog: real(7)?,
            lambda: real(8)?,
            epoch_len_ns: num(9)?,
            action: if field(10).is_empty() { None } else { Some(field(10).parse().map_err(|_| err(10))?) },
            rtt_bar_ns: real(11)?,
            z_bar_ns: opt_real(12)?,
            clamped: match field(13) {
                "0" => false,
                "1" => true,
                _ => return Err(err(13)),
            },
            zeta: field(14).parse().map_err(|_| err(14))?,
            true_avg_age_ns: opt_real(15)?,
        });
    }
    Ok((cfg, rows))
}

pub fn read_trace(path: &Path) -> Result<(ExperimentConfig, Vec<TraceRow>), TraceError> {
    decode_trace(&fs::read(path)?)
}
