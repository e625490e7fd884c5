use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::archpool::PoolConfig;
use crate::clrun::TrainConfig;
use crate::datasets::{DatasetName, ScenarioSpec};
use crate::nncore::TopologyTag;
use crate::stats::DEFAULT_Q_GRID;

pub const ENV_DATA_ROOT: &str = "ADS_DATA_ROOT";
pub const ENV_WORKERS: &str = "ADS_WORKERS";

/// Pixel count shared by every supported benchmark (CIFAR is resampled to 28×28).
pub const INPUT_DIM: usize = 784;

/// Top-level experiment description, read from TOML.
///
/// ```toml
/// out_dir = "runs/desk"
/// seeds = [0, 1, 2]
///
/// [pool]
/// preset = "desk"
///
/// [train]
/// epochs = 2.0
///
/// [calibration]
/// fractions = [0.3, 1.0]
///
/// [[scenario]]
/// id = "m2f"
/// type = "transfer"
/// src = "mnist"
/// dst = "fashion_mnist"
/// eval_fraction = 0.2
/// calib_fraction = 0.1
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub out_dir: PathBuf,
    #[serde(default = "default_data_root")]
    pub data_root: PathBuf,
    /// Optional directory of `ADSD` dataset caches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub workers: usize,
    /// Seed of every data subsampling step.
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub pool: PoolSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioEntry>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_data_root() -> PathBuf {
    PathBuf::from("data")
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSection {
    /// `desk` (30 specs) or `full` (175 specs); the fields below override it.
    #[serde(default = "desk")]
    pub preset: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_candidates: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<BTreeMap<TopologyTag, usize>>,
    /// Use this manifest instead of generating a pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
}

fn desk() -> String {
    "desk".into()
}

impl Default for PoolSection {
    fn default() -> Self {
        PoolSection { preset: desk(), seed: 0, depths: None, width_candidates: None, counts: None, manifest: None }
    }
}

impl PoolSection {
    pub fn to_pool_config(&self) -> Result<PoolConfig, HarnessError> {
        let mut cfg = match self.preset.as_str() {
            "desk" => PoolConfig::desk(),
            "full" => PoolConfig::default(),
            other => return Err(HarnessError::Config(format!("unknown pool preset `{other}` (expected desk or full)"))),
        };
        cfg.seed = self.seed;
        if let Some(d) = &self.depths {
            cfg.depths = d.clone();
        }
        if let Some(w) = &self.width_candidates {
            cfg.width_candidates = w.clone();
        }
        if let Some(c) = &self.counts {
            cfg.per_category_counts = c.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Training-data fractions to calibrate on. Fraction 1 reuses the main
    /// pool runs of the calibration architectures.
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    /// Fraction whose parameters score the pool; ignored when `profile` is set.
    #[serde(default = "default_primary")]
    pub primary_fraction: f64,
    #[serde(default = "ten")]
    pub n_archs: usize,
    #[serde(default = "zero_seed")]
    pub seeds: Vec<u64>,
    /// Score with this stored profile instead of a fit from this experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default = "default_profiles_dir")]
    pub profiles_dir: PathBuf,
    /// Store the primary fit of the first scenario under this profile id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_profile: Option<String>,
}

fn default_fractions() -> Vec<f64> {
    vec![0.3, 1.0]
}

fn default_primary() -> f64 {
    0.3
}

fn ten() -> usize {
    10
}

fn zero_seed() -> Vec<u64> {
    vec![0]
}

fn default_profiles_dir() -> PathBuf {
    PathBuf::from("profiles")
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            fractions: default_fractions(),
            primary_fraction: default_primary(),
            n_archs: 10,
            seeds: zero_seed(),
            profile: None,
            profiles_dir: default_profiles_dir(),
            save_profile: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    #[serde(default = "n_perm")]
    pub n_perm: usize,
    #[serde(default = "n_boot")]
    pub n_boot: usize,
    #[serde(default = "level")]
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "q_grid")]
    pub q_grid: Vec<f64>,
    /// Random rankings averaged for the selector baseline.
    #[serde(default = "baseline_perms")]
    pub baseline_perms: usize,
}

fn n_perm() -> usize {
    9999
}

fn n_boot() -> usize {
    2000
}

fn level() -> f64 {
    0.95
}

fn q_grid() -> Vec<f64> {
    DEFAULT_Q_GRID.to_vec()
}

fn baseline_perms() -> usize {
    1000
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { n_perm: n_perm(), n_boot: n_boot(), level: level(), seed: 0, q_grid: q_grid(), baseline_perms: baseline_perms() }
    }
}

/// A scenario plus per-scenario run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    #[serde(flatten)]
    pub spec: ScenarioSpec,
    /// Overrides the train config's task-1 accuracy gate for this scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_task1_acc: Option<f64>,
}

impl ScenarioEntry {
    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        if self.min_task1_acc.is_some() {
            cfg.min_task1_acc = self.min_task1_acc;
        }
        cfg
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the file, then applies `ADS_DATA_ROOT` / `ADS_WORKERS`.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply_env(&mut self) -> Result<(), HarnessError> {
        if let Ok(root) = std::env::var(ENV_DATA_ROOT) {
            if !root.is_empty() {
                self.data_root = PathBuf::from(root);
            }
        }
        if let Ok(w) = std::env::var(ENV_WORKERS) {
            self.workers = w.trim().parse().map_err(|_| HarnessError::Config(format!("{ENV_WORKERS}=`{w}` is not a worker count")))?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.scenarios.is_empty() {
            return bad("at least one [[scenario]] is required".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.workers == 0 {
            return bad("workers must be ≥ 1".into());
        }
        let mut ids: Vec<&str> = self.scenarios.iter().map(|s| s.id()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("scenario ids must be unique".into());
        }
        for s in &self.scenarios {
            if s.id().is_empty() || s.id().contains(['/', '\\']) {
                return bad(format!("scenario id `{}` must be a non-empty file name", s.id()));
            }
            s.spec.validate().map_err(|e| HarnessError::Config(format!("scenario {}: {e}", s.id())))?;
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must not repeat".into());
        }
        self.train.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let c = &self.calibration;
        if c.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("calibration fractions must be in (0, 1]".into());
        }
        if c.profile.is_none() && !c.fractions.contains(&c.primary_fraction) {
            return bad(format!("primary_fraction {} is not among the calibration fractions", c.primary_fraction));
        }
        if c.n_archs < 1 || c.seeds.is_empty() {
            return bad("calibration needs at least one architecture and one seed".into());
        }
        if c.fractions.contains(&1.0) && c.seeds.iter().any(|s| !self.seeds.contains(s)) {
            return bad("fraction 1 reuses main runs, so calibration seeds must be among the experiment seeds".into());
        }
        if self.stats.q_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("q_grid must be strictly increasing".into());
        }
        self.pool.to_pool_config()?;
        Ok(())
    }

    pub fn datasets(&self) -> Vec<DatasetName> {
        let mut out: Vec<DatasetName> = self.scenarios.iter().flat_map(|s| s.spec.kind.datasets()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Everything that changes numbers; worker count and paths are left out.
    pub(crate) fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.workers = 1;
        c.out_dir = PathBuf::new();
        c.data_root = PathBuf::new();
        c.cache_dir = None;
        c.calibration.profiles_dir = PathBuf::new();
        c.calibration.save_profile = None;
        c.to_toml()
    }
}
