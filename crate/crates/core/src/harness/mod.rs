//! Experiment orchestration: builds scenarios and pools, runs every
//! (architecture, scenario, seed) job on a worker pool, resumes from the
//! persisted record streams and renders the reports.

mod config;
mod report;
mod runner;
mod svg;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{CalibrationConfig, ExperimentConfig, PoolSection, ScenarioEntry, StatsConfig, ENV_DATA_ROOT, ENV_WORKERS, INPUT_DIM};
pub use report::{
    emit_report, load_state, scenario_report, ScenarioState, AggregatedArch, ExcludedArch, ReportSet, ScenarioReport, SelectorSummary, TransferRow, CORRELATION_COLUMNS,
};
pub use runner::{calibration_archs, run_calibration, run_experiment, run_jobs, ExperimentOutcome, Job, JobResult};
pub use svg::{pr_svg, scatter_svg};

use crate::archpool::PoolError;
use crate::calib::CalibError;
use crate::clrun::RunError;
use crate::datasets::DataError;
use crate::stats::StatsError;
use crate::ads::AdsError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error(transparent)]
    Ads(#[from] AdsError),
    #[error("{context}: {source}")]
    Stats { context: String, source: StatsError },
    #[error("experiment directory {dir} was created with a different config; use a fresh --out")]
    ConfigChanged { dir: PathBuf },
    #[error("experiment incomplete, {} missing runs: {}", .missing.len(), preview(.missing))]
    Incomplete { missing: Vec<String> },
    #[error("{} runs failed: {}", .failed.len(), preview(.failed))]
    Partial { failed: Vec<String> },
    #[error("{path}: {msg}")]
    File { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// True when the failure is a too-small sample for a statistic.
    pub fn is_insufficient_sample(&self) -> bool {
        matches!(self, HarnessError::Stats { source: StatsError::TooFew { .. }, .. })
    }
}

fn preview(items: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut s = items.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if items.len() > SHOWN {
        s.push_str(&format!(", … ({} more)", items.len() - SHOWN));
    }
    s
}

/// File layout of an experiment directory.
pub mod layout {
    use super::*;

    pub fn config(out: &Path) -> PathBuf {
        out.join("config.toml")
    }

    pub fn scenario_dir(out: &Path, scenario: &str) -> PathBuf {
        out.join(scenario)
    }

    pub fn pool(out: &Path, scenario: &str) -> PathBuf {
        scenario_dir(out, scenario).join("pool.jsonl")
    }

    pub fn records(out: &Path, scenario: &str) -> PathBuf {
        scenario_dir(out, scenario).join("records.jsonl")
    }

    /// `f0.3`, `f1`.
    pub fn fraction_label(f: f64) -> String {
        format!("f{f}")
    }

    pub fn calib_records(out: &Path, scenario: &str, fraction: f64) -> PathBuf {
        scenario_dir(out, scenario).join(format!("calib_{}.jsonl", fraction_label(fraction)))
    }

    pub fn params(out: &Path, scenario: &str, label: &str) -> PathBuf {
        scenario_dir(out, scenario).join(format!("params_{label}.toml"))
    }

    pub fn ads(out: &Path, scenario: &str) -> PathBuf {
        scenario_dir(out, scenario).join("ads.csv")
    }

    pub fn reports(out: &Path) -> PathBuf {
        out.join("reports")
    }
}
