//! Experiment configuration, batch runs, trace persistence and statistics.

pub mod config;
pub mod matrix;
pub mod plot;
pub mod summary;
pub mod trace;

pub use config::{ChannelPreset, ConfigError, ExperimentConfig};
pub use matrix::{run_matrix, CellResult, MatrixError, RunData, RunOutcome};
pub use plot::{emit_plot_data, PlotKind};
pub use summary::{summarize, SummaryStats, Welford};
pub use trace::{read_trace, write_trace, TraceError, TraceRow};
