//! Configuration loading, epsilon sweeps, rate fitting and report files.

pub mod config;
pub mod fit;
pub mod report;
pub mod sweep;

pub use config::{load_config, parse_config, LoadedConfig, RunConfig};
pub use fit::{fit_rate, RateFit};
pub use report::{emit_reports, load_report, refit_csv, Report};
pub use sweep::{run_epsilon, run_rows, run_sweep, summarize, RunRow, SweepResult};
