//! Batch execution of experiment cells.
//!
//! Every (cell, seed) pair is an independent simulation and runs on the rayon
//! pool. Each run writes `<out>/<cell>/seed-<seed>.csv`; once all runs are in,
//! each cell gets a `summary.txt` and the matrix gets `matrix.csv`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use super::config::{ChannelPreset, ConfigError, ExperimentConfig};
use super::summary::{summarize, SummaryStats};
use super::trace::{rows_from_records, write_trace, TraceRow};
use crate::netsim::{run_simulation, Conservation, FaultRecovery};
use crate::policy::{PolicyConfig, PolicyKind};
use crate::time::{Timestamp, NANOS_PER_SEC};

/// κ values swept by default. Only 0.1, 0.5, 1 and 2 have reference results.
pub const DEFAULT_KAPPAS: [f64; 8] = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0];
pub const REFERENCE_KAPPAS: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

pub const FEEDBACK_FAULT_START_S: u64 = 20;
pub const FEEDBACK_FAULT_DURATION_S: u64 = 30;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("cell '{cell}': {source}")]
    Config { cell: String, source: ConfigError },
    #[error("cell name '{0}' used twice")]
    DuplicateCell(String),
    #[error("cell '{0}' has no seeds")]
    NoSeeds(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub rows: Vec<TraceRow>,
    pub stats: Option<SummaryStats>,
    pub conservation: Conservation,
    /// Present when the cell schedules exactly one fault episode.
    pub recovery: Option<FaultRecovery>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub seed: u64,
    pub run_id: String,
    pub trace_path: PathBuf,
    pub result: Result<RunData, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunOutcome>,
    /// Statistics over the rows of every successful run.
    pub pooled: Option<SummaryStats>,
}

impl CellResult {
    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.result.is_err()).count()
    }

    pub fn run(&self, seed: u64) -> Option<&RunData> {
        self.runs.iter().find(|r| r.seed == seed).and_then(|r| r.result.as_ref().ok())
    }
}

pub fn run_id(cell: &str, seed: u64) -> String {
    format!("{cell}-s{seed}")
}

pub fn trace_path(out: &Path, cell: &str, seed: u64) -> PathBuf {
    out.join(cell).join(format!("seed-{seed}.csv"))
}

/// Runs one seed of `cfg` in memory.
pub fn simulate_run(cfg: &ExperimentConfig, seed: u64) -> Result<RunData, String> {
    let sim = run_simulation(&cfg.sim_config(seed)).map_err(|e| e.to_string())?;
    let recovery = match (cfg.fault.onset_rate_per_sec, cfg.fault.scheduled.as_slice()) {
        (0.0, [(start, dur)]) => Some(FaultRecovery::from_rows(
            &sim.rows,
            *start,
            start.saturating_add_nanos(*dur),
            cfg.peak_age_threshold_ns,
        )),
        _ => None,
    };
    let rows = rows_from_records(&run_id(&cfg.name, seed), cfg.policy.kind, &sim.rows);
    Ok(RunData {
        stats: summarize(&rows, cfg.peak_age_threshold_ns),
        rows,
        conservation: sim.conservation,
        recovery,
    })
}

/// Executes every cell. Validation problems abort before anything runs; a
/// failing run is recorded in its cell and the rest continue.
pub fn run_matrix(cells: &[ExperimentConfig], out: &Path) -> Result<Vec<CellResult>, MatrixError> {
    let mut names = HashSet::new();
    for c in cells {
        c.validate().map_err(|source| MatrixError::Config { cell: c.name.clone(), source })?;
        if c.seeds.is_empty() {
            return Err(MatrixError::NoSeeds(c.name.clone()));
        }
        if !names.insert(c.name.as_str()) {
            return Err(MatrixError::DuplicateCell(c.name.clone()));
        }
    }
    if cells.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(out)?;

    let jobs: Vec<(usize, u64)> =
        cells.iter().enumerate().flat_map(|(i, c)| c.seeds.iter().map(move |&s| (i, s))).collect();
    let outcomes: Vec<(usize, RunOutcome)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let cfg = &cells[i];
            let path = trace_path(out, &cfg.name, seed);
            let result = simulate_run(cfg, seed).and_then(|data| {
                write_trace(&path, &cfg.for_seed(seed), &data.rows).map_err(|e| e.to_string())?;
                Ok(data)
            });
            (i, RunOutcome { seed, run_id: run_id(&cfg.name, seed), trace_path: path, result })
        })
        .collect();

    let mut results: Vec<CellResult> =
        cells.iter().map(|c| CellResult { config: c.clone(), runs: Vec::new(), pooled: None }).collect();
    for (i, o) in outcomes {
        results[i].runs.push(o);
    }
    for cell in &mut results {
        let all: Vec<TraceRow> = cell
            .runs
            .iter()
            .filter_map(|r| r.result.as_ref().ok())
            .flat_map(|d| d.rows.iter().cloned())
            .collect();
        cell.pooled = summarize(&all, cell.config.peak_age_threshold_ns);
        fs::create_dir_all(out.join(cell.name()))?;
        fs::write(out.join(cell.name()).join("summary.txt"), cell_summary_text(cell))?;
    }
    fs::write(out.join("matrix.csv"), matrix_table(&results))?;
    Ok(results)
}

pub fn cell_summary_text(cell: &CellResult) -> String {
    let mut s = String::new();
    for line in cell.config.to_text().lines() {
        let _ = writeln!(s, "# {line}");
    }
    match &cell.pooled {
        Some(p) => s.push_str(&p.to_text()),
        None => s.push_str("epochs = 0\n"),
    }
    for run in &cell.runs {
        match &run.result {
            Ok(d) => {
                if let Some(st) = &d.stats {
                    let _ = writeln!(
                        s,
                        "run.{} = weighted_mean_age_ns {} mean_age_ns {} var_age_ns2 {} clamp_fraction {} violations {}",
                        run.seed, st.weighted_mean_age_ns, st.mean_age_ns, st.var_age_ns2, st.clamp_fraction, st.violations
                    );
                }
                if let Some(r) = &d.recovery {
                    let opt = |x: Option<usize>| x.map_or("none".to_string(), |v| v.to_string());
                    let _ = writeln!(
                        s,
                        "run.{}.recovery = first_violation {} recovery_epochs {} recovery_time_ns {}",
                        run.seed,
                        opt(r.first_violation),
                        opt(r.recovery_epochs),
                        r.recovery_time_ns.map_or("none".to_string(), |v| v.to_string())
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(s, "run.{}.error = {}", run.seed, e.replace('\n', " "));
            }
        }
    }
    s
}

fn matrix_table(cells: &[CellResult]) -> String {
    let mut s = String::from(
        "cell,policy,kappa,epoch_multiplier,runs_ok,runs_failed,weighted_mean_age_ns,mean_age_ns,median_age_ns,var_age_ns2,clamp_fraction,violations\n",
    );
    for c in cells {
        let p = &c.config.policy;
        let _ = write!(
            s,
            "{},{},{},{},{},{}",
            c.name(),
            p.kind,
            p.kappa,
            p.epoch_multiplier,
            c.runs.len() - c.failures(),
            c.failures()
        );
        match &c.pooled {
            Some(st) => {
                let _ = writeln!(
                    s,
                    ",{},{},{},{},{},{}",
                    st.weighted_mean_age_ns, st.mean_age_ns, st.median_age_ns, st.var_age_ns2, st.clamp_fraction, st.violations
                );
            }
            None => s.push_str(",,,,,,\n"),
        }
    }
    s
}

fn cell_with(base: &ExperimentConfig, name: String, policy: PolicyConfig, seeds: &[u64]) -> ExperimentConfig {
    ExperimentConfig { name, policy, seeds: seeds.to_vec(), ..base.clone() }
}

/// One ACP cell per κ on `base`'s channel.
pub fn kappa_sweep(base: &ExperimentConfig, kappas: &[f64], seeds: &[u64]) -> Vec<ExperimentConfig> {
    kappas
        .iter()
        .map(|&k| {
            let policy = PolicyConfig { kappa: k, ..PolicyConfig::new(PolicyKind::Acp) };
            cell_with(base, format!("acp-kappa-{k}"), policy, seeds)
        })
        .collect()
}

/// Original and modified ACP+ for each epoch multiplier, on the small-delay
/// channel.
pub fn acpplus_compare(multipliers: &[u32], seeds: &[u64]) -> Vec<ExperimentConfig> {
    let base = ExperimentConfig::with_channel(ChannelPreset::SmallDelay);
    let mut cells = Vec::new();
    for &m in multipliers {
        for (kind, tag) in [(PolicyKind::AcpPlusOriginal, "acpplus"), (PolicyKind::AcpPlusModified, "acpplusmod")] {
            let policy = PolicyConfig { epoch_multiplier: m, ..PolicyConfig::new(kind) };
            cells.push(cell_with(&base, format!("{tag}-T{m}"), policy, seeds));
        }
    }
    cells
}

/// Lazy with and without peak-age feedback under one scheduled coalescing
/// episode.
pub fn feedback_test(threshold_ns: u64, seeds: &[u64]) -> Vec<ExperimentConfig> {
    let mut base = ExperimentConfig { peak_age_threshold_ns: threshold_ns, ..ExperimentConfig::default() };
    base.fault.onset_rate_per_sec = 0.0;
    base.fault.scheduled =
        vec![(Timestamp::from_secs(FEEDBACK_FAULT_START_S), FEEDBACK_FAULT_DURATION_S * NANOS_PER_SEC)];
    [true, false]
        .into_iter()
        .map(|fb| {
            let name = if fb { "lazy-feedback-on" } else { "lazy-feedback-off" };
            ExperimentConfig { feedback: fb, ..cell_with(&base, name.into(), PolicyConfig::new(PolicyKind::Lazy), seeds) }
        })
        .collect()
}
