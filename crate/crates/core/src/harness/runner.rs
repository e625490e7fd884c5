use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, INPUT_DIM};
use super::report::{emit_report, ReportSet};
use super::{layout, HarnessError};
use crate::archpool::{self, PoolEntry};
use crate::calib::{calibrate_params, CalibrationParams, ParamsSource};
use crate::clrun::{self, RunOptions, RunRecord, RunTarget, TrainConfig};
use crate::datasets::{make_scenario, DataPool, Scenario};
use crate::seeds;

/// One training run to perform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub scenario_id: String,
    /// `main` or a calibration fraction label such as `f0.3`.
    pub variant: String,
    pub arch_id: String,
    pub seed: u64,
}

impl std::fmt::Display for Job {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}/seed{}", self.scenario_id, self.variant, self.arch_id, self.seed)
    }
}

/// Message a worker sends back to the coordinator.
#[derive(Debug)]
pub struct JobResult<R> {
    pub index: usize,
    pub result: R,
}

/// Runs `work` over `jobs` on `workers` threads. Results reach `sink` on the
/// calling thread in completion order; a sink error stops the hand-out of
/// new jobs, lets running ones finish and is returned after all threads join.
pub fn run_jobs<J, R, E, W, S>(jobs: &[J], workers: usize, work: W, mut sink: S) -> Result<(), E>
where
    J: Sync,
    R: Send,
    W: Fn(&J) -> R + Sync,
    S: FnMut(JobResult<R>) -> Result<(), E>,
{
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<JobResult<R>>();
    let mut outcome = Ok(());
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            let tx = tx.clone();
            let (next, stop, work) = (&next, &stop, &work);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(index) else { break };
                if tx.send(JobResult { index, result: work(job) }).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for msg in rx {
            if outcome.is_ok() {
                if let Err(e) = sink(msg) {
                    stop.store(true, Ordering::SeqCst);
                    outcome = Err(e);
                }
            }
        }
    });
    outcome
}

/// `n` pool indices drawn by a seeded shuffle, in pool order.
pub fn calibration_archs(entries: &[PoolEntry], n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..entries.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds::derive(seed, "calibration-archs")));
    idx.truncate(n);
    idx.sort_unstable();
    idx
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub new_runs: usize,
    pub reused_runs: usize,
    pub reports: ReportSet,
}

struct Variant {
    scenario: usize,
    label: String,
    path: PathBuf,
    fraction: f64,
    train: TrainConfig,
    entries: Vec<usize>,
    seeds: Vec<u64>,
}

pub(crate) fn read_record_file(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    clrun::read_records(BufReader::new(File::open(path)?)).map_err(|e| HarnessError::File { path: path.to_path_buf(), msg: e.to_string() })
}

/// Sorts by key and drops duplicate keys (first occurrence wins).
pub(crate) fn canonical(mut records: Vec<RunRecord>) -> Vec<RunRecord> {
    records.sort_by_key(|r| r.key());
    records.dedup_by(|a, b| a.key() == b.key());
    records
}

fn rewrite_sorted(path: &Path) -> Result<(), HarnessError> {
    if !path.exists() {
        return Ok(());
    }
    let records = canonical(read_record_file(path)?);
    let tmp = path.with_extension("jsonl.tmp");
    clrun::write_records(&records, BufWriter::new(File::create(&tmp)?))?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// Pool of each scenario: from the manifest when configured, otherwise
/// generated, and pinned in the experiment directory on first use.
pub(crate) fn scenario_pools(cfg: &ExperimentConfig) -> Result<Vec<Vec<PoolEntry>>, HarnessError> {
    let pool_cfg = cfg.pool.to_pool_config()?;
    cfg.scenarios
        .iter()
        .map(|s| {
            let entries = match &cfg.pool.manifest {
                Some(path) => archpool::load_manifest(path)?,
                None => archpool::generate_pool(&pool_cfg, INPUT_DIM, s.spec.kind.num_classes())?,
            };
            let path = layout::pool(&cfg.out_dir, s.id());
            if path.exists() {
                if archpool::load_manifest(&path)? != entries {
                    return Err(HarnessError::ConfigChanged { dir: cfg.out_dir.clone() });
                }
            } else {
                fs::create_dir_all(layout::scenario_dir(&cfg.out_dir, s.id()))?;
                archpool::save_manifest(&entries, &path)?;
            }
            Ok(entries)
        })
        .collect()
}

fn load_data(cfg: &ExperimentConfig) -> Result<DataPool, HarnessError> {
    let mut pool = DataPool::new();
    for name in cfg.datasets() {
        match &cfg.cache_dir {
            Some(dir) => pool.load_cached(&cfg.data_root, dir, name)?,
            None => pool.load(&cfg.data_root, name)?,
        }
    }
    Ok(pool)
}

fn pin_config(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    fs::create_dir_all(&cfg.out_dir)?;
    let path = layout::config(&cfg.out_dir);
    if path.exists() {
        let text = fs::read_to_string(&path)?;
        let old = ExperimentConfig::from_toml(&text).map_err(|e| HarnessError::File { path: path.clone(), msg: e.to_string() })?;
        if old.fingerprint() != cfg.fingerprint() {
            return Err(HarnessError::ConfigChanged { dir: cfg.out_dir.clone() });
        }
    }
    fs::write(&path, cfg.to_toml())?;
    Ok(())
}

/// Executes the missing runs; returns (new, reused) counts.
fn execute(cfg: &ExperimentConfig, with_main: bool) -> Result<(usize, usize), HarnessError> {
    cfg.validate()?;
    pin_config(cfg)?;
    let pools = scenario_pools(cfg)?;

    let mut variants = Vec::new();
    for (si, s) in cfg.scenarios.iter().enumerate() {
        let train = s.train_config(&cfg.train);
        if with_main {
            variants.push(Variant {
            scenario: si,
            label: "main".into(),
            path: layout::records(&cfg.out_dir, s.id()),
            fraction: 1.0,
            train: train.clone(),
            entries: (0..pools[si].len()).collect(),
            seeds: cfg.seeds.clone(),
            });
        }
        let calib = calibration_archs(&pools[si], cfg.calibration.n_archs, cfg.pool.seed);
        for &f in cfg.calibration.fractions.iter().filter(|&&f| f < 1.0) {
            variants.push(Variant {
                scenario: si,
                label: layout::fraction_label(f),
                path: layout::calib_records(&cfg.out_dir, s.id(), f),
                fraction: f,
                train: train.clone(),
                entries: calib.clone(),
                seeds: cfg.calibration.seeds.clone(),
            });
        }
    }

    let mut jobs: Vec<(usize, usize, u64)> = Vec::new();
    let mut reused = 0;
    for (vi, v) in variants.iter().enumerate() {
        let done: BTreeSet<(String, u64)> = read_record_file(&v.path)?.into_iter().map(|r| (r.arch_id, r.seed)).collect();
        for &e in &v.entries {
            for &seed in &v.seeds {
                if done.contains(&(pools[v.scenario][e].id.clone(), seed)) {
                    reused += 1;
                } else {
                    jobs.push((vi, e, seed));
                }
            }
        }
    }

    let mut failed = Vec::new();
    if !jobs.is_empty() {
        log::info!("{} runs to do, {} already recorded", jobs.len(), reused);
        let data = load_data(cfg)?;
        let mut scenarios: Vec<Scenario> = Vec::new();
        for s in &cfg.scenarios {
            scenarios.push(make_scenario(&s.spec, &data, cfg.data_seed)?);
        }
        drop(data);
        let needed: BTreeSet<usize> = jobs.iter().map(|j| j.0).collect();
        let fractional: Vec<Option<Scenario>> = variants
            .iter()
            .enumerate()
            .map(|(vi, v)| {
                (v.fraction < 1.0 && needed.contains(&vi))
                    .then(|| scenarios[v.scenario].with_train_fraction(v.fraction, seeds::derive(cfg.data_seed, "calibration")))
                    .transpose()
            })
            .collect::<Result<_, _>>()?;

        let started = Instant::now();
        let total = jobs.len();
        let mut finished = 0;
        let work = |&(vi, e, seed): &(usize, usize, u64)| {
            let v = &variants[vi];
            let entry = &pools[v.scenario][e];
            let spec = entry.spec();
            let target = RunTarget { arch_id: &entry.id, spec: &spec, arch_seed: entry.seed };
            let scenario = fractional[vi].as_ref().unwrap_or(&scenarios[v.scenario]);
            clrun::run_scenario(&target, scenario, &v.train, seed, &RunOptions::default())
        };
        run_jobs(&jobs, cfg.workers, work, |msg: JobResult<Result<RunRecord, clrun::RunError>>| -> Result<(), HarnessError> {
            let (vi, e, seed) = jobs[msg.index];
            let v = &variants[vi];
            let job = Job { scenario_id: cfg.scenarios[v.scenario].id().to_string(), variant: v.label.clone(), arch_id: pools[v.scenario][e].id.clone(), seed };
            finished += 1;
            match msg.result {
                Ok(record) => {
                    let mut f = OpenOptions::new().create(true).append(true).open(&v.path)?;
                    clrun::write_records(std::slice::from_ref(&record), &mut f)?;
                    log::info!(
                        "[{finished}/{total}] {job} {:?} shift={:.4} ({:.1}s, {:.0}s elapsed)",
                        record.status,
                        record.observed_shift,
                        record.wall_time,
                        started.elapsed().as_secs_f64()
                    );
                }
                Err(err) => {
                    log::error!("[{finished}/{total}] {job} failed: {err}");
                    failed.push(format!("{job}: {err}"));
                }
            }
            Ok(())
        })?;
    }
    for v in &variants {
        rewrite_sorted(&v.path)?;
    }
    if !failed.is_empty() {
        return Err(HarnessError::Partial { failed });
    }
    Ok((jobs.len(), reused))
}

/// Executes all missing runs of the experiment, then renders its reports.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    let (new_runs, reused_runs) = execute(cfg, true)?;
    let reports = emit_report(&cfg.out_dir)?;
    if let Some(id) = &cfg.calibration.save_profile {
        let first = &reports.scenarios[0];
        let mut params: CalibrationParams = first.params.clone();
        params.source.id = id.clone();
        fs::create_dir_all(&cfg.calibration.profiles_dir)?;
        params.save(&cfg.calibration.profiles_dir.join(format!("{id}.toml")))?;
    }
    Ok(ExperimentOutcome { new_runs, reused_runs, reports })
}

/// Runs only the subset-calibration jobs (fractions below 1) and fits their
/// parameters, stored next to the records as `params_f<fraction>.toml`.
pub fn run_calibration(cfg: &ExperimentConfig) -> Result<Vec<CalibrationParams>, HarnessError> {
    execute(cfg, false)?;
    let mut out = Vec::new();
    for s in &cfg.scenarios {
        for &f in cfg.calibration.fractions.iter().filter(|&&f| f < 1.0) {
            let label = layout::fraction_label(f);
            let runs = read_record_file(&layout::calib_records(&cfg.out_dir, s.id(), f))?;
            let source = ParamsSource { id: format!("{}@{label}", s.id()), scenarios: vec![s.id().to_string()], subset_fraction: f, ..Default::default() };
            let params = calibrate_params(&canonical(runs), source)?;
            params.save(&layout::params(&cfg.out_dir, s.id(), &label))?;
            out.push(params);
        }
    }
    Ok(out)
}
