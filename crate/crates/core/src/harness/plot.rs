//! Two-column `x y` text files for external plotting tools.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::matrix::{CellResult, REFERENCE_KAPPAS};
use super::trace::TraceRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Age CDF (ms, probability) and RTT CDF per cell.
    Cdf,
    /// Per-epoch average age (s, ms) per run.
    Trace,
    /// Pooled mean age (ms) against κ, one point per cell.
    Sweep,
}

impl FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cdf" => Ok(PlotKind::Cdf),
            "trace" => Ok(PlotKind::Trace),
            "sweep" => Ok(PlotKind::Sweep),
            _ => Err(format!("unknown plot kind '{s}' (expected cdf, trace or sweep)")),
        }
    }
}

fn xy_text(header: &str, points: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut s = format!("# {header}\n");
    for (x, y) in points {
        let _ = writeln!(s, "{x} {y}");
    }
    s
}

pub fn cdf_text(label: &str, points: &[(f64, f64)]) -> String {
    xy_text(&format!("{label}: value_ms cumulative_probability"), points.iter().map(|&(x, p)| (x / 1e6, p)))
}

pub fn trace_text(rows: &[TraceRow]) -> String {
    let label = rows.first().map_or("", |r| r.run_id.as_str());
    xy_text(
        &format!("{label}: t_end_s avg_age_ms"),
        rows.iter().map(|r| (r.t_end_ns as f64 / 1e9, r.avg_age_ns / 1e6)),
    )
}

/// Cells whose κ is outside the reference set are listed in the header.
pub fn sweep_text(cells: &[CellResult]) -> String {
    let mut pts: Vec<(f64, f64)> = cells
        .iter()
        .filter_map(|c| c.pooled.as_ref().map(|p| (c.config.policy.kappa, p.weighted_mean_age_ns / 1e6)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let extra: Vec<String> =
        pts.iter().filter(|(k, _)| !REFERENCE_KAPPAS.contains(k)).map(|(k, _)| k.to_string()).collect();
    let mut header = String::from("kappa mean_age_ms");
    if !extra.is_empty() {
        let _ = write!(header, "\n# no reference result for kappa {}", extra.join(", "));
    }
    xy_text(&header, pts)
}

/// Writes the files for `kind` into `dir` and returns their paths.
pub fn emit_plot_data(cells: &[CellResult], kind: PlotKind, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> io::Result<()> {
        let p = dir.join(name);
        fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    match kind {
        PlotKind::Cdf => {
            for c in cells {
                if let Some(p) = &c.pooled {
                    put(format!("{}.age_cdf.dat", c.name()), cdf_text(&format!("{} age", c.name()), &p.age_cdf))?;
                    put(format!("{}.rtt_cdf.dat", c.name()), cdf_text(&format!("{} rtt", c.name()), &p.rtt_cdf))?;
                }
            }
        }
        PlotKind::Trace => {
            for c in cells {
                for r in &c.runs {
                    if let Ok(d) = &r.result {
                        put(format!("{}.trace.dat", r.run_id), trace_text(&d.rows))?;
                    }
                }
            }
        }
        PlotKind::Sweep => put("sweep.dat".into(), sweep_text(cells))?,
    }
    Ok(written)
}
