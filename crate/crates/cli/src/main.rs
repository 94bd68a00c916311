use std::fs;
use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use agectl_core::harness::config::ExperimentConfig;
use agectl_core::harness::matrix::{self, CellResult, DEFAULT_KAPPAS};
use agectl_core::harness::plot::{self, PlotKind};
use agectl_core::harness::summary::summarize;
use agectl_core::harness::trace::{self, TraceRow};
use agectl_core::policy::PolicyKind;
use agectl_core::time::NANOS_PER_MS;
use agectl_core::udp::{self, SenderOptions};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "agectl", version, about = "Age-of-information rate control experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every seed of one config in the simulator.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// ACP over a list of κ values.
    SweepKappa {
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, default_value_t = 5)]
        runs: u64,
        /// Base config for channel and session settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Original against modified ACP+ on the small-delay channel.
    CompareAcpplus {
        #[arg(long, value_delimiter = ',', default_values_t = [10u32, 30])]
        epochs: Vec<u32>,
        #[arg(long, default_value_t = 5)]
        runs: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lazy with and without peak-age feedback under a coalescing fault.
    FeedbackTest {
        #[arg(long, default_value_t = 200)]
        threshold_ms: u64,
        #[arg(long, default_value_t = 5)]
        runs: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize existing trace files.
    Analyze {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Serve as the echo monitor until killed.
    UdpEcho {
        #[arg(long)]
        bind: String,
    },
    /// Run a live session against an echo monitor.
    UdpSend {
        #[arg(long)]
        peer: String,
        #[arg(long)]
        policy: Option<PolicyKind>,
        #[arg(long)]
        packets: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    // A trace file carries its config in the header.
    let cfg = match ExperimentConfig::parse(&text) {
        Ok(cfg) => cfg,
        Err(e) => match trace::decode_trace(text.as_bytes()) {
            Ok((cfg, _)) => cfg,
            Err(_) => return Err(e).with_context(|| format!("parsing {}", path.display())),
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn seeds(runs: u64) -> Vec<u64> {
    (1..=runs).collect()
}

fn report(cells: &[CellResult], out: &Path) -> Result<()> {
    for c in cells {
        let mean = c.pooled.as_ref().map_or("-".into(), |p| format!("{:.3} ms", p.weighted_mean_age_ns / 1e6));
        println!("{:<24} runs {:>2}  failed {:>2}  mean age {}", c.name(), c.runs.len(), c.failures(), mean);
        for r in &c.runs {
            if let Err(e) = &r.result {
                eprintln!("  {} failed: {e}", r.run_id);
            }
        }
    }
    plot::emit_plot_data(cells, PlotKind::Cdf, &out.join("plot"))?;
    plot::emit_plot_data(cells, PlotKind::Trace, &out.join("plot"))?;
    println!("results in {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            report(&matrix::run_matrix(&[cfg], &out)?, &out)
        }
        Cmd::SweepKappa { values, runs, config, out } => {
            let base = match config {
                Some(p) => load_config(&p)?,
                None => ExperimentConfig::default(),
            };
            let kappas = values.unwrap_or_else(|| DEFAULT_KAPPAS.to_vec());
            let cells = matrix::run_matrix(&matrix::kappa_sweep(&base, &kappas, &seeds(runs)), &out)?;
            plot::emit_plot_data(&cells, PlotKind::Sweep, &out.join("plot"))?;
            report(&cells, &out)
        }
        Cmd::CompareAcpplus { epochs, runs, out } => {
            report(&matrix::run_matrix(&matrix::acpplus_compare(&epochs, &seeds(runs)), &out)?, &out)
        }
        Cmd::FeedbackTest { threshold_ms, runs, out } => {
            let cells = matrix::run_matrix(&matrix::feedback_test(threshold_ms * NANOS_PER_MS, &seeds(runs)), &out)?;
            for c in &cells {
                for r in &c.runs {
                    if let Some(rec) = r.result.as_ref().ok().and_then(|d| d.recovery) {
                        println!(
                            "{:<24} recovery epochs {:?}  recovery time {:?} ms",
                            r.run_id,
                            rec.recovery_epochs,
                            rec.recovery_time_ns.map(|t| t / NANOS_PER_MS)
                        );
                    }
                }
            }
            report(&cells, &out)
        }
        Cmd::Analyze { traces, report } => {
            fs::create_dir_all(&report)?;
            let mut all: Vec<TraceRow> = Vec::new();
            let mut threshold = None;
            for p in &traces {
                let (cfg, rows) = trace::read_trace(p).with_context(|| format!("reading {}", p.display()))?;
                let stats = summarize(&rows, cfg.peak_age_threshold_ns);
                let stem = p.file_stem().map_or("trace".into(), |s| s.to_string_lossy().into_owned());
                let label = format!("{}-{stem}", cfg.name);
                if let Some(st) = &stats {
                    fs::write(report.join(format!("{label}.summary.txt")), st.to_text())?;
                    fs::write(report.join(format!("{label}.age_cdf.dat")), plot::cdf_text(&label, &st.age_cdf))?;
                    fs::write(report.join(format!("{label}.trace.dat")), plot::trace_text(&rows))?;
                    println!("{label:<32} epochs {:>5}  mean age {:.3} ms", st.epochs, st.weighted_mean_age_ns / 1e6);
                }
                threshold.get_or_insert(cfg.peak_age_threshold_ns);
                all.extend(rows);
            }
            if let Some(st) = summarize(&all, threshold.unwrap_or(u64::MAX)) {
                fs::write(report.join("pooled.summary.txt"), st.to_text())?;
                fs::write(report.join("pooled.age_cdf.dat"), plot::cdf_text("pooled age", &st.age_cdf))?;
                fs::write(report.join("pooled.rtt_cdf.dat"), plot::cdf_text("pooled rtt", &st.rtt_cdf))?;
            }
            Ok(())
        }
        Cmd::UdpEcho { bind } => {
            let socket = UdpSocket::bind(&bind).with_context(|| format!("binding {bind}"))?;
            println!("echo listening on {}", socket.local_addr()?);
            let stats = udp::run_echo(&socket, &AtomicBool::new(false))?;
            println!("received {} replied {} malformed {}", stats.received, stats.replied, stats.malformed);
            Ok(())
        }
        Cmd::UdpSend { peer, policy, packets, config, out } => {
            let mut cfg = match config {
                Some(p) => load_config(&p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(kind) = policy {
                cfg.policy.kind = kind;
            }
            if let Some(n) = packets {
                cfg.packet_budget = n;
            }
            cfg.validate()?;
            let opts = SenderOptions::new(udp::live_session_config(cfg.session()));
            let res = udp::run_sender(&peer, &opts)?;
            let rows = trace::rows_from_records(&format!("{}-udp", cfg.name), cfg.policy.kind, &res.rows);
            trace::write_trace(&out, &cfg, &rows)?;
            println!(
                "sent {} acked {} lost {} in flight {} epochs {}",
                res.sent,
                res.acked,
                res.lost,
                res.in_flight,
                rows.len()
            );
            if let Some(st) = summarize(&rows, cfg.peak_age_threshold_ns) {
                println!("mean sender-side age {:.3} ms  mean backlog {:.3}", st.weighted_mean_age_ns / 1e6, st.mean_backlog);
            }
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
