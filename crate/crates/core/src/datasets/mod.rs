//! Benchmark ingestion (IDX, CIFAR-10 binary) and construction of the
//! two-task continual-learning scenarios.

pub mod cache;
mod cifar;
mod idx;
mod rotate;
mod scenario;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cifar::{load_cifar10, CIFAR_RECORD_BYTES};
pub use idx::{load_idx, IMAGE_MAGIC, LABEL_MAGIC};
pub use rotate::rotate_images;
pub use scenario::{make_scenario, sample_subset, Scenario, ScenarioKind, ScenarioSpec, Subset, TaskData};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: wrong magic 0x{found:08x}, expected 0x{expected:08x}")]
    WrongMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("{path}: truncated file ({found} bytes, need {expected})")]
    Truncated { path: PathBuf, expected: usize, found: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: size {size} is not a multiple of the {record}-byte record")]
    RecordSize { path: PathBuf, size: usize, record: usize },
    #[error("no input files given")]
    NoFiles,
    #[error("label {label} out of range")]
    BadLabel { label: usize },
    #[error("images are {0}×{1}, rotation needs square images")]
    NotSquare(usize, usize),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("fraction {fraction} of {n} samples yields no sample")]
    EmptySubset { fraction: f64, n: usize },
    #[error("fraction must be in (0, 1], got {0}")]
    Fraction(f64),
    #[error("dataset {name}/{split} not loaded")]
    Missing { name: DatasetName, split: Split },
    #[error("{what} not found: expected {}", .paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    FilesNotFound { what: String, paths: Vec<PathBuf> },
    #[error("bad dataset cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    Mnist,
    FashionMnist,
    Cifar10,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::FashionMnist => "fashion_mnist",
            DatasetName::Cifar10 => "cifar10",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        [DatasetName::Mnist, DatasetName::FashionMnist, DatasetName::Cifar10].get(c as usize).copied()
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mnist" | "m" => Ok(DatasetName::Mnist),
            "fashion_mnist" | "fashion-mnist" | "fmnist" | "f" => Ok(DatasetName::FashionMnist),
            "cifar10" | "cifar-10" | "c" => Ok(DatasetName::Cifar10),
            _ => Err(format!("unknown dataset `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Flattened grayscale images with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: DatasetName,
    pub split: Split,
    /// `N × (height · width)`, row-major pixels.
    pub images: Array2<f64>,
    pub labels: Vec<usize>,
    pub image_shape: (usize, usize),
    /// Size of the label space (10 for the raw benchmarks).
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name,
            split: self.split,
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            image_shape: self.image_shape,
            num_classes: self.num_classes,
        }
    }

    /// Indices per label, ascending.
    pub fn class_indices(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &y) in self.labels.iter().enumerate() {
            out.entry(y).or_default().push(i);
        }
        out
    }

    /// Concatenation of datasets sharing image shape and label space.
    pub fn concat(parts: &[&Dataset]) -> Dataset {
        let first = parts[0];
        let views: Vec<_> = parts.iter().map(|d| d.images.view()).collect();
        Dataset {
            name: first.name,
            split: first.split,
            images: ndarray::concatenate(Axis(0), &views).expect("matching widths"),
            labels: parts.iter().flat_map(|d| d.labels.iter().copied()).collect(),
            image_shape: first.image_shape,
            num_classes: first.num_classes,
        }
    }
}

/// Per-feature centering with a single pooled scale, fitted on one split and
/// then frozen for every task of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Array1<f64>,
    pub scale: f64,
}

impl Standardization {
    pub fn fit(ds: &Dataset) -> Standardization {
        let mean = ds.images.mean_axis(Axis(0)).expect("non-empty dataset");
        let n = ds.len() as f64;
        let mut total_var = 0.0;
        for col in 0..ds.dim() {
            let m = mean[col];
            total_var += ds.images.column(col).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        }
        let pooled = (total_var / ds.dim() as f64).sqrt();
        Standardization { mean, scale: if pooled > 1e-12 { pooled } else { 1.0 } }
    }

    pub fn apply(&self, ds: &mut Dataset) {
        let inv = 1.0 / self.scale;
        for mut row in ds.images.axis_iter_mut(Axis(0)) {
            row.zip_mut_with(&self.mean, |x, &m| *x = (*x - m) * inv);
        }
    }
}

/// Loaded datasets keyed by name and split.
#[derive(Debug, Default, Clone)]
pub struct DataPool {
    sets: BTreeMap<(DatasetName, Split), Dataset>,
}

impl DataPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ds: Dataset) {
        self.sets.insert((ds.name, ds.split), ds);
    }

    pub fn get(&self, name: DatasetName, split: Split) -> Result<&Dataset, DataError> {
        self.sets.get(&(name, split)).ok_or(DataError::Missing { name, split })
    }

    /// Loads both splits of `name` from the conventional layout under `root`:
    /// `mnist/`, `fashion_mnist/` (IDX files) and `cifar10/` (binary batches).
    pub fn load(&mut self, root: &Path, name: DatasetName) -> Result<(), DataError> {
        for split in [Split::Train, Split::Test] {
            if self.sets.contains_key(&(name, split)) {
                continue;
            }
            let ds = match name {
                DatasetName::Mnist | DatasetName::FashionMnist => {
                    let dir = root.join(name.as_str());
                    let prefix = if split == Split::Train { "train" } else { "t10k" };
                    let images = dir.join(format!("{prefix}-images-idx3-ubyte"));
                    let labels = dir.join(format!("{prefix}-labels-idx1-ubyte"));
                    let missing: Vec<PathBuf> = [&images, &labels].into_iter().filter(|p| !p.exists()).cloned().collect();
                    if !missing.is_empty() {
                        return Err(DataError::FilesNotFound { what: format!("{name} {split} split"), paths: missing });
                    }
                    load_idx(&images, &labels, name, split)?
                }
                DatasetName::Cifar10 => {
                    let dir = root.join("cifar10");
                    let files: Vec<PathBuf> = if split == Split::Train {
                        (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect()
                    } else {
                        vec![dir.join("test_batch.bin")]
                    };
                    let missing: Vec<PathBuf> = files.iter().filter(|p| !p.exists()).cloned().collect();
                    if !missing.is_empty() {
                        return Err(DataError::FilesNotFound { what: format!("{name} {split} split"), paths: missing });
                    }
                    load_cifar10(&files, split)?
                }
            };
            self.insert(ds);
        }
        Ok(())
    }
}
