//! Deterministic dense-network engine: bias-free ReLU forward/backward,
//! Kaiming initialization, SGD with momentum, the true-class-logit gradient
//! and a power-iteration spectral norm.

mod arch;
pub mod checkpoint;
mod net;
mod spectral;

pub use arch::{ArchitectureSpec, SpecDiagnostic, TopologyTag};
pub(crate) use arch::is_valley;
pub use net::{frobenius, DenseNet, ForwardTrace, GradKind, GradientSet, OptimizerState};
pub use spectral::{spectral_norm, SpectralNorm, DEFAULT_TOL as SPECTRAL_TOL};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid architecture: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidSpec(Vec<SpecDiagnostic>),
    #[error("expected {expected} weight layers, found {found}")]
    LayerCount { expected: usize, found: usize },
    #[error("layer {layer}: expected shape {expected:?}, found {found:?}")]
    WeightShape { layer: usize, expected: (usize, usize), found: (usize, usize) },
    #[error("layer {layer}: weights contain non-finite values")]
    NonFiniteWeights { layer: usize },
    #[error("input has {found} features, network expects {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("expected {expected} labels, found {found}")]
    LabelCount { expected: usize, found: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("{0}")]
    Hyperparameter(String),
    #[error("not a network checkpoint (magic {found:?})")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated")]
    TruncatedCheckpoint,
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
