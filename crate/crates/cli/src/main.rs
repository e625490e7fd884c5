use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ads_core::archpool::{self, PoolConfig};
use ads_core::calib::{calibrate_params, CalibrationParams, ParamsSource};
use ads_core::clrun;
use ads_core::harness::{self, layout, ExperimentConfig, HarnessError, CORRELATION_COLUMNS, INPUT_DIM};
use ads_core::{compute_ads, ArchitectureSpec};
use clap::{Args, Parser, Subcommand};

/// Architecture-driven shift laboratory.
#[derive(Debug, Parser)]
#[command(name = "adslab", version)]
struct Cli {
    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate an architecture pool manifest (JSONL).
    GenPool(GenPool),
    /// Run the subset-calibration jobs of a config, or fit params from record streams.
    Calibrate(Calibrate),
    /// Run a full experiment (resumes an existing output directory).
    Run(Run),
    /// Score architectures with a params profile.
    Ads(Ads),
    /// Print the ADS / logit-shift correlation of a finished experiment.
    Correlate(DirArgs),
    /// Print the precision/recall analysis of the ADS selector.
    Select(DirArgs),
    /// Re-render every CSV/SVG report of a finished experiment.
    Report(DirArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replace the configured run seeds with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (overrides config and ADS_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
    /// Experiment directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
            if cfg.calibration.fractions.contains(&1.0) {
                cfg.calibration.seeds = vec![s];
            }
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct GenPool {
    /// Take the pool section and output width from this config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `desk` or `full` when no config is given.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Pool seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = INPUT_DIM)]
    input_dim: usize,
    /// Output width; defaults to the first scenario's class count, else 10.
    #[arg(long)]
    output_dim: Option<usize>,
    /// Manifest path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Calibrate {
    /// Experiment config whose calibration jobs to run (TOML).
    #[arg(long, conflicts_with = "records")]
    config: Option<PathBuf>,
    /// Fit from these RunRecord streams instead of running jobs.
    #[arg(long, num_args = 1..)]
    records: Vec<PathBuf>,
    /// Profile id stored in the fitted params.
    #[arg(long, default_value = "custom")]
    id: String,
    /// Replace the configured run seeds with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (overrides config and ADS_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
    /// Experiment directory with --config, params file with --records.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Run {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Use this manifest instead of generating the pool.
    #[arg(long)]
    pool: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Ads {
    /// Full width vector, e.g. 784,256,512,10.
    #[arg(long, value_delimiter = ',', conflicts_with = "pool")]
    widths: Vec<usize>,
    /// Score every entry of this manifest.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Params profile (TOML).
    #[arg(long)]
    params: PathBuf,
    /// CSV output for --pool; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DirArgs {
    /// Experiment directory.
    #[arg(long, required_unless_present = "config")]
    dir: Option<PathBuf>,
    /// Use the config's `out_dir` as the experiment directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for `report`; ignored elsewhere.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl DirArgs {
    fn dir(&self) -> Result<PathBuf, HarnessError> {
        match (&self.dir, &self.config) {
            (Some(d), _) => Ok(d.clone()),
            (None, Some(c)) => Ok(ExperimentConfig::load(c)?.out_dir),
            (None, None) => Err(HarnessError::Config("--dir or --config is required".into())),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log)).format_timestamp_secs().init();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.is_insufficient_sample() {
                eprintln!("error: insufficient sample: {e}");
            } else {
                eprintln!("error: {e}");
                if matches!(e, HarnessError::Data(_)) {
                    eprintln!("hint: set data_root in the config or {} to the directory holding mnist/ and fashion_mnist/", harness::ENV_DATA_ROOT);
                }
            }
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), HarnessError> {
    match cmd {
        Cmd::GenPool(a) => gen_pool(a),
        Cmd::Calibrate(a) => calibrate(a),
        Cmd::Run(a) => run(a),
        Cmd::Ads(a) => ads(a),
        Cmd::Correlate(a) => correlate(&a.dir()?),
        Cmd::Select(a) => select(&a.dir()?),
        Cmd::Report(a) => report(&a),
    }
}

fn gen_pool(a: GenPool) -> Result<(), HarnessError> {
    let (mut pool_cfg, cfg_out): (PoolConfig, Option<usize>) = match &a.config {
        Some(p) => {
            let cfg = ExperimentConfig::load(p)?;
            (cfg.pool.to_pool_config()?, Some(cfg.scenarios[0].spec.kind.num_classes()))
        }
        None => {
            let section = harness::PoolSection { preset: a.preset.clone(), ..Default::default() };
            (section.to_pool_config()?, None)
        }
    };
    if let Some(s) = a.seed {
        pool_cfg.seed = s;
    }
    let output_dim = a.output_dim.or(cfg_out).unwrap_or(10);
    let entries = archpool::generate_pool(&pool_cfg, a.input_dim, output_dim)?;
    match &a.out {
        Some(p) => {
            archpool::save_manifest(&entries, p)?;
            eprintln!("wrote {} architectures to {}", entries.len(), p.display());
        }
        None => archpool::write_manifest(&entries, std::io::stdout().lock())?,
    }
    Ok(())
}

fn calibrate(a: Calibrate) -> Result<(), HarnessError> {
    if let Some(config) = a.config {
        let args = ConfigArgs { config, seed: a.seed, workers: a.workers, out: a.out };
        let mut cfg = args.load()?;
        if let Some(s) = args.seed {
            cfg.calibration.seeds = vec![s];
        }
        for p in harness::run_calibration(&cfg)? {
            print_params(&p);
        }
        return Ok(());
    }
    if a.records.is_empty() {
        return Err(HarnessError::Config("calibrate needs --config or --records".into()));
    }
    let mut runs = Vec::new();
    for p in &a.records {
        let f = std::fs::File::open(p).map_err(|e| HarnessError::File { path: p.clone(), msg: e.to_string() })?;
        runs.extend(clrun::read_records(std::io::BufReader::new(f))?);
    }
    let mut scenarios: Vec<String> = runs.iter().map(|r| r.scenario_id.clone()).collect();
    scenarios.sort();
    scenarios.dedup();
    let params = calibrate_params(&runs, ParamsSource { id: a.id, scenarios, subset_fraction: 1.0, ..Default::default() })?;
    print_params(&params);
    if let Some(out) = a.out {
        params.save(&out)?;
    }
    Ok(())
}

fn print_params(p: &CalibrationParams) {
    println!(
        "{}: alpha={:.4} beta={:.4} b={:.4} c={:.4} r2_width={:.3} r2_depth={:.3} records={}",
        p.source.id, p.alpha, p.beta, p.b, p.c, p.fit_r2_width, p.fit_r2_depth, p.n_layer_records
    );
}

fn run(a: Run) -> Result<(), HarnessError> {
    let mut cfg = a.cfg.load()?;
    if let Some(p) = a.pool {
        cfg.pool.manifest = Some(p);
    }
    let outcome = harness::run_experiment(&cfg)?;
    eprintln!("{} new runs, {} reused", outcome.new_runs, outcome.reused_runs);
    print_correlation(&outcome.reports.scenarios);
    Ok(())
}

fn ads(a: Ads) -> Result<(), HarnessError> {
    let params = CalibrationParams::load(&a.params)?;
    if let Some(pool) = a.pool {
        let entries = archpool::load_manifest(&pool)?;
        let rows: Vec<(String, ads_core::AdsScore)> =
            entries.iter().map(|e| Ok((e.id.clone(), compute_ads(&e.spec(), &params)?))).collect::<Result<_, HarnessError>>()?;
        let res = match &a.out {
            Some(p) => ads_core::ads::write_ads_csv(&rows, std::fs::File::create(p)?),
            None => ads_core::ads::write_ads_csv(&rows, std::io::stdout().lock()),
        };
        return res.map_err(|e| HarnessError::Config(e.to_string()));
    }
    if a.widths.is_empty() {
        return Err(HarnessError::Config("ads needs --widths or --pool".into()));
    }
    let spec = ArchitectureSpec::from_widths(a.widths.clone())
        .map_err(|d| HarnessError::Config(d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")))?;
    let score = compute_ads(&spec, &params)?;
    println!("ads {}", score.value);
    for (l, t) in score.per_layer_terms.iter().enumerate() {
        println!("term {} {}", l + 1, t);
    }
    Ok(())
}

fn print_correlation(reports: &[harness::ScenarioReport]) {
    println!("{}", CORRELATION_COLUMNS.join(","));
    for r in reports {
        let c = &r.correlation;
        println!("{},{},{},{},{},{},{},{}", r.scenario_id, c.n, c.spearman, c.kendall, c.dc, c.p_value, c.ci_low, c.ci_high);
    }
}

fn reports_for(dir: &Path) -> Result<Vec<harness::ScenarioReport>, HarnessError> {
    let (cfg, states) = harness::load_state(dir)?;
    states.iter().map(|s| harness::scenario_report(&cfg, s)).collect()
}

fn correlate(dir: &Path) -> Result<(), HarnessError> {
    print_correlation(&reports_for(dir)?);
    Ok(())
}

fn select(dir: &Path) -> Result<(), HarnessError> {
    for r in reports_for(dir)? {
        match &r.selector {
            Some(s) => {
                println!("{}: auc_pr={} baseline={} positive_rate={} n_arch={}", r.scenario_id, s.report.auc_pr, s.baseline_auc, s.report.positive_rate, s.n_arch);
                println!("q,precision,recall");
                for i in 0..s.report.thresholds.len() {
                    println!("{},{},{}", s.report.thresholds[i], s.report.precision[i], s.report.recall[i]);
                }
            }
            None => println!("{}: selector undefined ({})", r.scenario_id, r.selector_error.as_deref().unwrap_or("unknown")),
        }
    }
    Ok(())
}

fn report(a: &DirArgs) -> Result<(), HarnessError> {
    let dir = a.dir()?;
    let set = harness::emit_report(&dir)?;
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out)?;
        for f in set.files.iter().filter(|f| f.starts_with(layout::reports(&dir))) {
            if let Some(name) = f.file_name() {
                std::fs::copy(f, out.join(name))?;
            }
        }
    }
    for f in &set.files {
        println!("{}", f.display());
    }
    Ok(())
}
