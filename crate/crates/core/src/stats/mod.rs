//! Rank correlations with permutation p-values and bootstrap intervals,
//! direction consistency, expected calibration error, temperature scaling and
//! the precision/recall analysis of an ADS-based selector.

mod calibration;
mod rank;
mod selector;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibration::{confidences, ece, nll, temperature_scale, TemperatureFit, ECE_BINS};
pub use rank::{
    average_ranks, bootstrap_ci, direction_consistency, kendall, pearson, perm_p_value, spearman, BootstrapCi, DirectionConsistency,
};
pub use selector::{average_precision, pr_analysis, random_baseline, SelectorReport, DEFAULT_Q_GRID};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("insufficient sample: need at least {need}, got {got}")]
    TooFew { need: usize, got: usize },
    /// The statistic is undefined for this input (constant vector, all ties).
    #[error("undefined statistic: {0}")]
    Undefined(&'static str),
    #[error("{0}")]
    Invalid(String),
}

fn check_pair(x: &[f64], y: &[f64], need: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::Length(x.len(), y.len()));
    }
    if x.len() < need {
        return Err(StatsError::TooFew { need, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::Invalid("non-finite input".into()));
    }
    Ok(())
}

/// Summary of how well one score ranks architectures by observed shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub spearman: f64,
    pub kendall: f64,
    pub dc: f64,
    /// Two-sided permutation p-value of the Spearman coefficient.
    pub p_value: f64,
    /// Percentile bootstrap interval on `dc`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    /// Pairs with an exact tie in either variable, left out of `dc`.
    pub dc_excluded_pairs: usize,
    /// Bootstrap resamples whose DC was undefined.
    pub ci_skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSettings {
    pub n_perm: usize,
    pub n_boot: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for CorrelationSettings {
    fn default() -> Self {
        CorrelationSettings { n_perm: 9999, n_boot: 2000, level: 0.95, seed: 0 }
    }
}

/// Spearman, Kendall, DC, permutation p-value and the bootstrap CI on DC.
pub fn correlate(score: &[f64], shift: &[f64], settings: &CorrelationSettings) -> Result<CorrelationReport, StatsError> {
    check_pair(score, shift, 3)?;
    let rs = spearman(score, shift)?;
    let tau = kendall(score, shift)?;
    let dc = direction_consistency(score, shift)?;
    let p_value = perm_p_value(score, shift, spearman, settings.n_perm, crate::seeds::derive(settings.seed, "perm"))?;
    let dc_stat = |a: &[f64], b: &[f64]| direction_consistency(a, b).map(|d| d.dc);
    let ci = bootstrap_ci(score, shift, dc_stat, settings.n_boot, settings.level, crate::seeds::derive(settings.seed, "boot"))?;
    Ok(CorrelationReport {
        spearman: rs,
        kendall: tau,
        dc: dc.dc,
        p_value,
        ci_low: ci.low,
        ci_high: ci.high,
        n: score.len(),
        dc_excluded_pairs: dc.excluded,
        ci_skipped: ci.skipped,
    })
}
