use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rotate_images, DataError, DataPool, Dataset, DatasetName, Split, Standardization};
use crate::seeds;

/// How the task sequence is built from the raw benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Task 1 on `src`, task 2 on `dst`; both keep the 10-way head.
    Transfer { src: DatasetName, dst: DatasetName },
    /// Two disjoint class groups of one dataset, each relabelled to `[0, k)`.
    Split { dataset: DatasetName, classes_a: Vec<usize>, classes_b: Vec<usize> },
    /// The same dataset seen at two rotation angles (degrees).
    Rotated { dataset: DatasetName, angle_a: f64, angle_b: f64 },
    /// `T` tasks, one per angle.
    RotatedSequence { dataset: DatasetName, angles: Vec<f64> },
}

impl ScenarioKind {
    /// Datasets the scenario reads.
    pub fn datasets(&self) -> Vec<DatasetName> {
        match self {
            ScenarioKind::Transfer { src, dst } if src == dst => vec![*src],
            ScenarioKind::Transfer { src, dst } => vec![*src, *dst],
            ScenarioKind::Split { dataset, .. } | ScenarioKind::Rotated { dataset, .. } | ScenarioKind::RotatedSequence { dataset, .. } => vec![*dataset],
        }
    }

    pub fn num_tasks(&self) -> usize {
        match self {
            ScenarioKind::RotatedSequence { angles, .. } => angles.len(),
            _ => 2,
        }
    }

    /// Width of the shared output head.
    pub fn num_classes(&self) -> usize {
        match self {
            ScenarioKind::Split { classes_a, classes_b, .. } => classes_a.len().max(classes_b.len()),
            _ => 10,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Scenario(m));
        match self {
            ScenarioKind::Transfer { .. } => Ok(()),
            ScenarioKind::Split { classes_a, classes_b, .. } => {
                let a: BTreeSet<_> = classes_a.iter().collect();
                let b: BTreeSet<_> = classes_b.iter().collect();
                if a.is_empty() || b.is_empty() {
                    return bad("split class sets must be non-empty".into());
                }
                if a.len() != classes_a.len() || b.len() != classes_b.len() {
                    return bad("split class sets contain duplicates".into());
                }
                if let Some(c) = a.iter().chain(b.iter()).find(|&&&c| c >= 10) {
                    return bad(format!("class {c} out of range"));
                }
                let common: Vec<_> = a.intersection(&b).collect();
                if !common.is_empty() {
                    return bad(format!("split class sets overlap on {common:?}"));
                }
                Ok(())
            }
            ScenarioKind::Rotated { angle_a, angle_b, .. } => check_angles(&[*angle_a, *angle_b]),
            ScenarioKind::RotatedSequence { angles, .. } => {
                if angles.len() < 2 {
                    return bad("a rotated sequence needs at least 2 angles".into());
                }
                check_angles(angles)
            }
        }
    }
}

fn check_angles(angles: &[f64]) -> Result<(), DataError> {
    match angles.iter().find(|a| !(0.0..360.0).contains(*a)) {
        Some(a) => Err(DataError::Scenario(format!("angle {a} outside [0, 360)"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: ScenarioKind,
    /// Share of each task's test split held out for evaluation.
    pub eval_fraction: f64,
    /// Share of task-1 training data used to compute g_old and for calibration.
    pub calib_fraction: f64,
    /// Optional cap on training samples per task (stratified).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_train_samples: Option<usize>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        check_fraction(self.eval_fraction)?;
        check_fraction(self.calib_fraction)?;
        if self.max_train_samples == Some(0) {
            return Err(DataError::Scenario("max_train_samples must be ≥ 1".into()));
        }
        self.kind.validate()
    }
}

fn check_fraction(f: f64) -> Result<(), DataError> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(DataError::Fraction(f))
    }
}

/// One task's data, standardized with task-1 statistics.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Dataset,
    pub eval: Dataset,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub tasks: Vec<TaskData>,
    /// `calib_fraction` of task-1 training data.
    pub calib: Dataset,
    pub standardization: Standardization,
    pub num_classes: usize,
}

impl Scenario {
    pub fn input_dim(&self) -> usize {
        self.tasks[0].train.dim()
    }

    /// Copy whose training sets keep only `fraction` of their samples. The
    /// evaluation sets and the g_old subset are untouched.
    pub fn with_train_fraction(&self, fraction: f64, seed: u64) -> Result<Scenario, DataError> {
        let mut out = self.clone();
        for (t, task) in out.tasks.iter_mut().enumerate() {
            task.train = sample_subset(&task.train, fraction, seeds::derive(seed, &format!("fraction/{t}")))?.data;
        }
        Ok(out)
    }
}

/// A sampled subset with the row indices it was drawn from.
#[derive(Debug, Clone)]
pub struct Subset {
    pub data: Dataset,
    pub indices: Vec<usize>,
    /// False when some class was too small for proportional allocation and
    /// the draw fell back to uniform sampling over all rows.
    pub stratified: bool,
}

/// Draws `round(fraction · N)` rows without replacement, stratified by class
/// with largest-remainder allocation.
pub fn sample_subset(ds: &Dataset, fraction: f64, seed: u64) -> Result<Subset, DataError> {
    check_fraction(fraction)?;
    let k = (fraction * ds.len() as f64).round() as usize;
    if k == 0 {
        return Err(DataError::EmptySubset { fraction, n: ds.len() });
    }
    Ok(sample_count(ds, k, seed))
}

fn sample_count(ds: &Dataset, k: usize, seed: u64) -> Subset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ds.len();
    let classes = ds.class_indices();
    let alloc = allocate(&classes, k, n);

    let (mut indices, stratified) = match alloc {
        Some(counts) => {
            let mut picked = Vec::with_capacity(k);
            for (class, idx) in &classes {
                let mut idx = idx.clone();
                idx.shuffle(&mut rng);
                picked.extend_from_slice(&idx[..counts[class]]);
            }
            (picked, true)
        }
        None => {
            log::warn!("subset of {k}/{n} too small to stratify over {} classes; sampling uniformly", classes.len());
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            all.truncate(k);
            (all, false)
        }
    };
    indices.shuffle(&mut rng);
    Subset { data: ds.select(&indices), indices, stratified }
}

/// Largest-remainder allocation of `k` over classes; `None` when some present
/// class would receive no sample.
fn allocate(classes: &BTreeMap<usize, Vec<usize>>, k: usize, n: usize) -> Option<BTreeMap<usize, usize>> {
    let mut counts = BTreeMap::new();
    let mut rema = Vec::new();
    let mut assigned = 0;
    for (&c, idx) in classes {
        let exact = k as f64 * idx.len() as f64 / n as f64;
        let base = exact.floor() as usize;
        counts.insert(c, base);
        assigned += base;
        rema.push((exact - base as f64, c));
    }
    // ties on the remainder go to the smaller label
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in rema.iter().take(k - assigned) {
        *counts.get_mut(&c).unwrap() += 1;
    }
    if counts.values().any(|&v| v == 0) {
        None
    } else {
        Some(counts)
    }
}

fn relabel(ds: &Dataset, classes: &[usize], num_classes: usize) -> Dataset {
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| classes.contains(&ds.labels[i])).collect();
    let mut out = ds.select(&keep);
    for y in &mut out.labels {
        *y = classes.iter().position(|c| c == y).unwrap();
    }
    out.num_classes = num_classes;
    out
}

/// Builds every task of `spec` from the loaded datasets. The whole result is
/// a pure function of `(spec, dataset bytes, seed)`.
pub fn make_scenario(spec: &ScenarioSpec, pool: &DataPool, seed: u64) -> Result<Scenario, DataError> {
    spec.validate()?;
    let num_classes = spec.kind.num_classes();

    // raw (train, test) per task
    let mut raw: Vec<(Dataset, Dataset)> = Vec::new();
    match &spec.kind {
        ScenarioKind::Transfer { src, dst } => {
            for name in [src, dst] {
                raw.push((pool.get(*name, Split::Train)?.clone(), pool.get(*name, Split::Test)?.clone()));
            }
            if raw[0].0.dim() != raw[1].0.dim() {
                return Err(DataError::Scenario(format!("{src} and {dst} differ in input dimension")));
            }
        }
        ScenarioKind::Split { dataset, classes_a, classes_b } => {
            let (tr, te) = (pool.get(*dataset, Split::Train)?, pool.get(*dataset, Split::Test)?);
            for classes in [classes_a, classes_b] {
                raw.push((relabel(tr, classes, num_classes), relabel(te, classes, num_classes)));
            }
        }
        ScenarioKind::Rotated { dataset, angle_a, angle_b } => {
            raw = rotated(pool, *dataset, &[*angle_a, *angle_b])?;
        }
        ScenarioKind::RotatedSequence { dataset, angles } => {
            raw = rotated(pool, *dataset, angles)?;
        }
    }

    let mut tasks = Vec::with_capacity(raw.len());
    for (t, (train, test)) in raw.into_iter().enumerate() {
        if train.is_empty() || test.is_empty() {
            return Err(DataError::Scenario(format!("task {} has no samples", t + 1)));
        }
        let train = match spec.max_train_samples {
            Some(cap) if cap < train.len() => sample_count(&train, cap, seeds::derive(seed, &format!("task{t}/cap"))).data,
            _ => train,
        };
        let eval = sample_subset(&test, spec.eval_fraction, seeds::derive(seed, &format!("task{t}/eval")))?.data;
        tasks.push(TaskData { train, eval });
    }

    let standardization = Standardization::fit(&tasks[0].train);
    for task in &mut tasks {
        standardization.apply(&mut task.train);
        standardization.apply(&mut task.eval);
    }
    let calib = sample_subset(&tasks[0].train, spec.calib_fraction, seeds::derive(seed, "calib"))?.data;
    Ok(Scenario { spec: spec.clone(), tasks, calib, standardization, num_classes })
}

fn rotated(pool: &DataPool, name: DatasetName, angles: &[f64]) -> Result<Vec<(Dataset, Dataset)>, DataError> {
    let (tr, te) = (pool.get(name, Split::Train)?, pool.get(name, Split::Test)?);
    angles.iter().map(|&a| Ok((rotate_images(tr, a)?, rotate_images(te, a)?))).collect()
}
