use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::{calibration_archs, canonical, read_record_file};
use super::svg::{pr_svg, scatter_svg};
use super::{layout, HarnessError};
use crate::ads::{compute_ads, write_ads_csv, AdsScore};
use crate::archpool::{self, PoolEntry};
use crate::calib::{calibrate_params, CalibrationParams, ParamsSource};
use crate::clrun::RunRecord;
use crate::seeds;
use crate::stats::{self, CorrelationReport, CorrelationSettings, SelectorReport};

pub const CORRELATION_COLUMNS: [&str; 8] = ["scenario", "n_arch", "spearman", "kendall", "dc", "p_value", "ci_low", "ci_high"];

/// Per-architecture aggregate over all configured seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedArch {
    pub arch_id: String,
    pub category: String,
    pub depth: usize,
    pub widths: Vec<usize>,
    pub ads: f64,
    /// Per-seed observed shift, in seed order.
    pub shifts: Vec<f64>,
    pub mean_shift: f64,
    pub mean_ece_drift: f64,
    /// Drift measured against the temperature-scaled post-task ECE.
    pub mean_ece_drift_ts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedArch {
    pub arch_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    /// `f0.3`, `f1` or `profile:<id>`.
    pub label: String,
    pub params: CalibrationParams,
    pub n_arch: usize,
    pub spearman: f64,
    pub kendall: f64,
    pub dc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorSummary {
    pub report: SelectorReport,
    pub baseline_auc: f64,
    pub n_arch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario_id: String,
    /// Which parameters scored the pool.
    pub params_label: String,
    pub params: CalibrationParams,
    pub archs: Vec<AggregatedArch>,
    pub excluded: Vec<ExcludedArch>,
    pub correlation: CorrelationReport,
    pub transfer: Vec<TransferRow>,
    /// Both fits over every valid pool run.
    pub pool_fit: Option<CalibrationParams>,
    pub pool_fit_error: Option<String>,
    pub selector: Option<SelectorSummary>,
    pub selector_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSet {
    pub scenarios: Vec<ScenarioReport>,
    pub files: Vec<PathBuf>,
}

/// Everything persisted for one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioState {
    pub scenario_id: String,
    pub entries: Vec<PoolEntry>,
    pub records: Vec<RunRecord>,
    /// Calibration runs per fraction label; fraction 1 uses pool runs.
    pub calib_runs: BTreeMap<String, (f64, Vec<RunRecord>)>,
}

fn missing_keys(records: &[RunRecord], entries: &[&PoolEntry], seeds: &[u64], scenario: &str, variant: &str, out: &mut Vec<String>) {
    for e in entries {
        for &s in seeds {
            if !records.iter().any(|r| r.arch_id == e.id && r.seed == s) {
                out.push(format!("{scenario}/{variant}/{}/seed{s}", e.id));
            }
        }
    }
}

/// Reads config, pools and record streams of an experiment directory and
/// checks that every expected run is present.
pub fn load_state(out: &Path) -> Result<(ExperimentConfig, Vec<ScenarioState>), HarnessError> {
    let cfg_path = layout::config(out);
    let text = fs::read_to_string(&cfg_path)
        .map_err(|e| HarnessError::File { path: cfg_path.clone(), msg: format!("{e} (not an experiment directory?)") })?;
    let cfg = ExperimentConfig::from_toml(&text).map_err(|e| HarnessError::File { path: cfg_path, msg: e.to_string() })?;
    let mut missing = Vec::new();
    let mut states = Vec::new();
    for s in &cfg.scenarios {
        let id = s.id();
        let entries = archpool::load_manifest(&layout::pool(out, id))?;
        let records = canonical(read_record_file(&layout::records(out, id))?);
        missing_keys(&records, &entries.iter().collect::<Vec<_>>(), &cfg.seeds, id, "main", &mut missing);
        let calib_idx = calibration_archs(&entries, cfg.calibration.n_archs, cfg.pool.seed);
        let calib_entries: Vec<&PoolEntry> = calib_idx.iter().map(|&i| &entries[i]).collect();
        let mut calib_runs = BTreeMap::new();
        for &f in &cfg.calibration.fractions {
            let label = layout::fraction_label(f);
            let runs = if f < 1.0 {
                canonical(read_record_file(&layout::calib_records(out, id, f))?)
            } else {
                records.clone()
            };
            let runs: Vec<RunRecord> = runs
                .into_iter()
                .filter(|r| calib_entries.iter().any(|e| e.id == r.arch_id) && cfg.calibration.seeds.contains(&r.seed))
                .collect();
            if f < 1.0 {
                missing_keys(&runs, &calib_entries, &cfg.calibration.seeds, id, &label, &mut missing);
            }
            calib_runs.insert(label, (f, runs));
        }
        states.push(ScenarioState { scenario_id: id.to_string(), entries, records, calib_runs });
    }
    if !missing.is_empty() {
        return Err(HarnessError::Incomplete { missing });
    }
    Ok((cfg, states))
}

fn aggregate(state: &ScenarioState, seeds: &[u64], params: &CalibrationParams) -> Result<(Vec<AggregatedArch>, Vec<ExcludedArch>), HarnessError> {
    let mut archs = Vec::new();
    let mut excluded = Vec::new();
    for e in &state.entries {
        let runs: Vec<&RunRecord> = seeds.iter().filter_map(|&s| state.records.iter().find(|r| r.arch_id == e.id && r.seed == s)).collect();
        let bad: Vec<String> = runs.iter().filter(|r| !r.is_valid()).map(|r| format!("seed {} {:?}", r.seed, r.status)).collect();
        if !bad.is_empty() {
            excluded.push(ExcludedArch { arch_id: e.id.clone(), reason: bad.join("; ") });
            continue;
        }
        let n = runs.len() as f64;
        let score = compute_ads(&e.spec(), params)?;
        archs.push(AggregatedArch {
            arch_id: e.id.clone(),
            category: e.category.as_str().to_string(),
            depth: e.depth,
            widths: e.widths.clone(),
            ads: score.value,
            shifts: runs.iter().map(|r| r.observed_shift).collect(),
            mean_shift: runs.iter().map(|r| r.observed_shift).sum::<f64>() / n,
            mean_ece_drift: runs.iter().map(|r| r.ece_drift()).sum::<f64>() / n,
            mean_ece_drift_ts: runs.iter().map(|r| r.ece_after_ts - r.ece_before).sum::<f64>() / n,
        });
    }
    Ok((archs, excluded))
}

fn stats_err(context: String) -> impl FnOnce(stats::StatsError) -> HarnessError {
    move |source| HarnessError::Stats { context, source }
}

fn transfer_row(label: String, params: CalibrationParams, entries: &[PoolEntry], archs: &[AggregatedArch]) -> Result<TransferRow, HarnessError> {
    let mut scores = Vec::with_capacity(archs.len());
    for a in archs {
        let e = entries.iter().find(|e| e.id == a.arch_id).expect("aggregated arch comes from the pool");
        scores.push(compute_ads(&e.spec(), &params)?.value);
    }
    let shift: Vec<f64> = archs.iter().map(|a| a.mean_shift).collect();
    let ctx = format!("calibration transfer {label}");
    Ok(TransferRow {
        spearman: stats::spearman(&scores, &shift).map_err(stats_err(ctx.clone()))?,
        kendall: stats::kendall(&scores, &shift).map_err(stats_err(ctx.clone()))?,
        dc: stats::direction_consistency(&scores, &shift).map_err(stats_err(ctx))?.dc,
        label,
        params,
        n_arch: archs.len(),
    })
}

/// Analysis of one scenario from its persisted state.
pub fn scenario_report(cfg: &ExperimentConfig, state: &ScenarioState) -> Result<ScenarioReport, HarnessError> {
    let id = &state.scenario_id;
    let usable = state
        .entries
        .iter()
        .filter(|e| state.records.iter().filter(|r| r.arch_id == e.id && cfg.seeds.contains(&r.seed)).all(|r| r.is_valid()))
        .count();
    if usable < 3 {
        return Err(HarnessError::Stats { context: format!("scenario {id} correlation"), source: stats::StatsError::TooFew { need: 3, got: usable } });
    }
    let mut fitted = BTreeMap::new();
    for (label, (f, runs)) in &state.calib_runs {
        let source = ParamsSource { id: format!("{id}@{label}"), scenarios: vec![id.clone()], subset_fraction: *f, ..Default::default() };
        let params = calibrate_params(runs, source)?;
        fitted.insert(label.clone(), params);
    }
    let (params_label, params) = match &cfg.calibration.profile {
        Some(p) => (format!("profile:{p}"), CalibrationParams::load_profile(&cfg.calibration.profiles_dir, p)?),
        None => {
            let label = layout::fraction_label(cfg.calibration.primary_fraction);
            let p = fitted[&label].clone();
            (label, p)
        }
    };
    let (archs, excluded) = aggregate(state, &cfg.seeds, &params)?;
    let ads: Vec<f64> = archs.iter().map(|a| a.ads).collect();
    let shift: Vec<f64> = archs.iter().map(|a| a.mean_shift).collect();
    let settings = CorrelationSettings {
        n_perm: cfg.stats.n_perm,
        n_boot: cfg.stats.n_boot,
        level: cfg.stats.level,
        seed: seeds::derive(cfg.stats.seed, &format!("correlate/{id}")),
    };
    let correlation = stats::correlate(&ads, &shift, &settings).map_err(stats_err(format!("scenario {id} correlation")))?;

    let mut transfer = Vec::new();
    for (label, p) in &fitted {
        transfer.push(transfer_row(label.clone(), p.clone(), &state.entries, &archs)?);
    }
    if cfg.calibration.profile.is_some() {
        transfer.push(transfer_row(params_label.clone(), params.clone(), &state.entries, &archs)?);
    }

    let pool_source = ParamsSource { id: format!("{id}@pool"), scenarios: vec![id.clone()], subset_fraction: 1.0, ..Default::default() };
    let (pool_fit, pool_fit_error) = match calibrate_params(&state.records, pool_source) {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let drift: Vec<f64> = archs.iter().map(|a| a.mean_ece_drift).collect();
    let selector = stats::pr_analysis(&ads, &drift, &cfg.stats.q_grid).and_then(|report| {
        let baseline_auc = stats::random_baseline(&drift, cfg.stats.baseline_perms, seeds::derive(cfg.stats.seed, &format!("selector/{id}")))?;
        Ok(SelectorSummary { report, baseline_auc, n_arch: archs.len() })
    });
    let (selector, selector_error) = match selector {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ScenarioReport {
        scenario_id: id.clone(),
        params_label,
        params,
        archs,
        excluded,
        correlation,
        transfer,
        pool_fit,
        pool_fit_error,
        selector,
        selector_error,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, HarnessError> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::File { path: path.to_path_buf(), msg: e.to_string() }
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush()?;
    Ok(())
}

fn s<T: std::fmt::Display>(v: T) -> String {
    v.to_string()
}

/// Recomputes every statistic from the persisted records and writes the
/// CSV, SVG and JSON reports under `<out>/reports`.
pub fn emit_report(out: &Path) -> Result<ReportSet, HarnessError> {
    let (cfg, states) = load_state(out)?;
    let dir = layout::reports(out);
    fs::create_dir_all(&dir)?;
    let mut reports = Vec::new();
    let mut files = Vec::new();
    for state in &states {
        let rep = scenario_report(&cfg, state)?;
        let id = &rep.scenario_id;
        for t in &rep.transfer {
            if !t.label.starts_with("profile:") {
                let p = layout::params(out, id, &t.label);
                t.params.save(&p)?;
                files.push(p);
            }
        }
        let scored: Vec<(String, AdsScore)> =
            state.entries.iter().map(|e| Ok((e.id.clone(), compute_ads(&e.spec(), &rep.params)?))).collect::<Result<_, HarnessError>>()?;
        let ads_path = layout::ads(out, id);
        write_ads_csv(&scored, File::create(&ads_path)?).map_err(|e| HarnessError::File { path: ads_path.clone(), msg: e.to_string() })?;
        files.push(ads_path);
        reports.push(rep);
    }

    let path = dir.join("correlation.csv");
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let c = &r.correlation;
            vec![r.scenario_id.clone(), s(c.n), s(c.spearman), s(c.kendall), s(c.dc), s(c.p_value), s(c.ci_low), s(c.ci_high)]
        })
        .collect();
    write_rows(&path, &CORRELATION_COLUMNS, &rows)?;
    files.push(path);

    let path = dir.join("calibration_transfer.csv");
    let header = ["scenario", "params", "fraction", "alpha", "beta", "b", "c", "fit_r2_width", "fit_r2_depth", "n_layer_records", "n_arch", "spearman", "kendall", "dc"];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|r| {
            r.transfer.iter().map(move |t| {
                let p = &t.params;
                vec![
                    r.scenario_id.clone(),
                    t.label.clone(),
                    s(p.source.subset_fraction),
                    s(p.alpha),
                    s(p.beta),
                    s(p.b),
                    s(p.c),
                    s(p.fit_r2_width),
                    s(p.fit_r2_depth),
                    s(p.n_layer_records),
                    s(t.n_arch),
                    s(t.spearman),
                    s(t.kendall),
                    s(t.dc),
                ]
            })
        })
        .collect();
    write_rows(&path, &header, &rows)?;
    files.push(path);

    let path = dir.join("fits.csv");
    let header = ["scenario", "source", "alpha", "beta", "se_alpha", "se_beta", "width_pearson_r", "fit_r2_width", "b", "c", "fit_r2_depth", "cos_floored", "n_layer_records"];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|r| r.transfer.iter().map(|t| &t.params).chain(r.pool_fit.as_ref()).map(move |p| (r, p)))
        .map(|(r, p)| {
            vec![
                r.scenario_id.clone(),
                p.source.id.clone(),
                s(p.alpha),
                s(p.beta),
                s(p.se_alpha),
                s(p.se_beta),
                s(p.width_pearson_r),
                s(p.fit_r2_width),
                s(p.b),
                s(p.c),
                s(p.fit_r2_depth),
                s(p.cos_floored),
                s(p.n_layer_records),
            ]
        })
        .collect();
    write_rows(&path, &header, &rows)?;
    files.push(path);

    let path = dir.join("selector.csv");
    let rows: Vec<Vec<String>> = reports
        .iter()
        .filter_map(|r| r.selector.as_ref().map(|sel| (r, sel)))
        .map(|(r, sel)| vec![r.scenario_id.clone(), s(sel.n_arch), s(sel.report.auc_pr), s(sel.baseline_auc), s(sel.report.positive_rate)])
        .collect();
    write_rows(&path, &["scenario", "n_arch", "auc_pr", "baseline_auc", "positive_rate"], &rows)?;
    files.push(path);

    for r in &reports {
        let id = &r.scenario_id;
        if let Some(sel) = &r.selector {
            let path = dir.join(format!("pr_{id}.csv"));
            let rows: Vec<Vec<String>> = (0..sel.report.thresholds.len())
                .map(|i| {
                    let q = sel.report.thresholds[i];
                    let k = ((q * sel.n_arch as f64).ceil() as usize).clamp(1, sel.n_arch);
                    vec![s(q), s(k), s(sel.report.precision[i]), s(sel.report.recall[i])]
                })
                .collect();
            write_rows(&path, &["q", "k", "precision", "recall"], &rows)?;
            files.push(path);
            let path = dir.join(format!("pr_{id}.svg"));
            fs::write(&path, pr_svg(&format!("{id}: stable-arch selection by ADS"), &sel.report, sel.baseline_auc))?;
            files.push(path);
        }
        let path = dir.join(format!("scatter_{id}.svg"));
        let points: Vec<(f64, f64, String)> = r.archs.iter().map(|a| (a.ads, a.mean_shift, a.category.clone())).collect();
        let title = format!("{id}: ADS vs logit shift (Spearman {:.3})", r.correlation.spearman);
        fs::write(&path, scatter_svg(&title, &points))?;
        files.push(path);
    }

    let set = ReportSet { scenarios: reports, files: Vec::new() };
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&set).map_err(|e| HarnessError::File { path: path.clone(), msg: e.to_string() })?;
    fs::write(&path, json)?;
    files.push(path);
    Ok(ReportSet { files, ..set })
}
