//! CLI, configuration, multi-seed sweeps, comparison tables, labeled-ratio
//! curves, and SVG plot emission.

pub mod cli;
pub mod config;
pub mod svg;
pub mod sweep;

pub use cli::cli;
pub use config::{ConfigFile, ExperimentConfig};
pub use svg::{emit_curve_svg, render_curve_svg, CurveSeries};
pub use sweep::{execute, mean_std, results_csv, run_sweep, summary_csv, CellResult, SweepResult};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum HarnessError {
    /// Problems with flags, config files, or experiment descriptions
    /// (exit code 2).
    #[error("{0}")]
    Config(String),
    /// Failures while executing an otherwise valid request (exit code 1).
    #[error("{0}")]
    Runtime(String),
}
