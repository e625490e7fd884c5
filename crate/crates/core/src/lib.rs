//! Architecture-driven shift (ADS) laboratory.
//!
//! Trains heterogeneous bias-free ReLU networks on two-task continual-learning
//! scenarios, records per-layer optimization traces, calibrates the four ADS
//! parameters from those traces and checks how well the resulting score ranks
//! architectures by their observed logit shift and calibration drift.

mod codec;
pub mod ads;
pub mod archpool;
pub mod calib;
pub mod clrun;
pub mod datasets;
pub mod harness;
pub mod nncore;
pub mod seeds;
pub mod stats;

pub use ads::{compute_ads, AdsError, AdsScore};
pub use calib::{calibrate_params, CalibrationParams};
pub use harness::{emit_report, run_experiment, ExperimentConfig};
pub use clrun::{LayerTrace, RunRecord, RunStatus, TrainConfig};
pub use nncore::{ArchitectureSpec, DenseNet, GradKind, GradientSet, NetError, OptimizerState, TopologyTag};
