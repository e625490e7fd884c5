//! Instrumented continual-learning runs: train task 1, freeze the reference
//! model and g_old, train the next task while tracing per-layer gradient
//! statistics, then measure the logit shift and calibration drift.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{Dataset, Scenario};
use crate::nncore::{checkpoint, frobenius, spectral_norm, ArchitectureSpec, DenseNet, GradKind, GradientSet, NetError, OptimizerState, SPECTRAL_TOL};
use crate::seeds;
use crate::stats::{self, StatsError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("train config: {0}")]
    Config(String),
    #[error("empty {0} set")]
    Empty(&'static str),
    #[error("{0}")]
    Mismatch(String),
    #[error("record stream line {line}: {msg}")]
    Stream { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How g_old is formed from the calibration subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldMode {
    /// Mean true-class-logit gradient over the whole subset.
    #[default]
    Mean,
    /// Gradient at the first subset sample only.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// S; used when `epochs` is unset.
    pub steps_per_task: usize,
    /// When set, S = round(epochs · ⌊N / batch⌋) for a task of N samples.
    pub epochs: Option<f64>,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// cos θ sampling stride, in steps.
    pub trace_every: usize,
    pub seed: u64,
    pub gold_mode: GoldMode,
    /// Runs whose task-1 eval accuracy falls below this are flagged underfit.
    pub min_task1_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps_per_task: 100,
            epochs: Some(2.0),
            batch_size: 128,
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            trace_every: 5,
            seed: 0,
            gold_mode: GoldMode::Mean,
            min_task1_acc: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::Config(m.into()));
        if self.epochs.is_none() && self.steps_per_task == 0 {
            return bad("steps_per_task must be ≥ 1");
        }
        if let Some(e) = self.epochs {
            if !(e > 0.0 && e.is_finite()) {
                return bad("epochs must be > 0");
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1");
        }
        if self.trace_every == 0 {
            return bad("trace_every must be ≥ 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !self.momentum.is_finite() || !self.weight_decay.is_finite() {
            return bad("lr must be > 0 and momentum/weight_decay finite");
        }
        Ok(())
    }

    /// S for a task with `n` training samples.
    pub fn steps_for(&self, n: usize) -> usize {
        match self.epochs {
            Some(e) => {
                let per_epoch = (n / self.batch_size.min(n.max(1))).max(1);
                ((e * per_epoch as f64).round() as usize).max(1)
            }
            None => self.steps_per_task,
        }
    }
}

/// Fixed g_old with its per-layer unit directions.
#[derive(Debug, Clone)]
pub struct Gold {
    pub grads: GradientSet,
    /// Flattened, L2-normalized layers (zero where the layer gradient is zero).
    pub unit: Vec<Array2<f64>>,
}

const GOLD_CHUNK: usize = 256;

/// Mean true-class-logit gradient over `calib`, evaluated in chunks.
pub fn compute_gold(net: &DenseNet, calib: &Dataset, mode: GoldMode) -> Result<Gold, RunError> {
    if calib.is_empty() {
        return Err(RunError::Empty("calibration"));
    }
    let n = match mode {
        GoldMode::Mean => calib.len(),
        GoldMode::Single => 1,
    };
    let mut grads = GradientSet::zeros_like(net, GradKind::LogitGrad);
    let mut start = 0;
    while start < n {
        let end = (start + GOLD_CHUNK).min(n);
        let g = net.logit_gradient(calib.images.slice(s![start..end, ..]), &calib.labels[start..end])?;
        grads.add_scaled((end - start) as f64 / n as f64, &g);
        start = end;
    }
    let unit = grads
        .layers
        .iter()
        .map(|g| {
            let norm = frobenius(g);
            if norm > 0.0 {
                g / norm
            } else {
                g.clone()
            }
        })
        .collect();
    Ok(Gold { grads, unit })
}

/// Per-step trace accumulators for hidden layers 1..=L.
#[derive(Debug, Clone)]
struct TraceAccum {
    pathlen: Vec<f64>,
    grad_sum: Vec<Array2<f64>>,
    cos_abs_sum: Vec<f64>,
    cos_samples: usize,
}

impl TraceAccum {
    fn new(net: &DenseNet) -> Self {
        let depth = net.spec().depth;
        TraceAccum {
            pathlen: vec![0.0; depth],
            grad_sum: net.weights()[..depth].iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            cos_abs_sum: vec![0.0; depth],
            cos_samples: 0,
        }
    }
}

/// Optional tracing during `train_task`.
pub struct TraceHooks<'a> {
    pub gold: &'a Gold,
    pub trace_every: usize,
    acc: Option<TraceAccum>,
}

impl<'a> TraceHooks<'a> {
    pub fn new(gold: &'a Gold, trace_every: usize) -> Self {
        TraceHooks { gold, trace_every, acc: None }
    }

    fn observe(&mut self, step: usize, net: &DenseNet, g: &GradientSet) {
        let acc = self.acc.get_or_insert_with(|| TraceAccum::new(net));
        let sample = step % self.trace_every == 0;
        for l in 0..acc.pathlen.len() {
            let gl = &g.layers[l];
            let norm = frobenius(gl);
            acc.pathlen[l] += norm;
            acc.grad_sum[l] += gl;
            if sample {
                let dot: f64 = gl.iter().zip(self.gold.unit[l].iter()).map(|(a, b)| a * b).sum();
                let cos = if norm > 0.0 { (dot / norm).clamp(-1.0, 1.0) } else { 0.0 };
                acc.cos_abs_sum[l] += cos.abs();
            }
        }
        if sample {
            acc.cos_samples += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub steps: usize,
    /// Mini-batch loss at every completed step.
    pub losses: Vec<f64>,
    /// Step at which the loss or a gradient became non-finite.
    pub diverged_at: Option<usize>,
}

fn check_data(net: &DenseNet, data: &Dataset) -> Result<(), RunError> {
    if data.is_empty() {
        return Err(RunError::Empty("training"));
    }
    if data.dim() != net.spec().input_dim() {
        return Err(RunError::Mismatch(format!("data has {} features, net expects {}", data.dim(), net.spec().input_dim())));
    }
    if let Some(&y) = data.labels.iter().find(|&&y| y >= net.spec().output_dim()) {
        return Err(RunError::Mismatch(format!("label {y} exceeds the {}-way head", net.spec().output_dim())));
    }
    Ok(())
}

/// Runs `steps` SGD steps on shuffled mini-batches. Batches are drawn from
/// successive seeded permutations, dropping each permutation's remainder.
/// A non-finite loss or gradient stops training before the offending update.
pub fn train_task(
    net: &mut DenseNet,
    state: &mut OptimizerState,
    data: &Dataset,
    steps: usize,
    batch_size: usize,
    seed: u64,
    mut hooks: Option<&mut TraceHooks>,
) -> Result<TrainStats, RunError> {
    check_data(net, data)?;
    let n = data.len();
    let b = batch_size.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n; // forces a shuffle on the first step
    let mut losses = Vec::with_capacity(steps);
    let mut batch = Array2::zeros((b, data.dim()));
    let mut labels = vec![0usize; b];

    for step in 0..steps {
        if cursor + b > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        for (k, &i) in order[cursor..cursor + b].iter().enumerate() {
            batch.row_mut(k).assign(&data.images.row(i));
            labels[k] = data.labels[i];
        }
        cursor += b;

        let trace = net.forward(batch.view())?;
        let (loss, grads) = net.loss_and_backward(&trace, &labels)?;
        if !loss.is_finite() {
            return Ok(TrainStats { steps: step, losses, diverged_at: Some(step) });
        }
        match state.step(net, &grads) {
            Ok(()) => {}
            Err(NetError::NonFiniteGradient { .. }) => return Ok(TrainStats { steps: step, losses, diverged_at: Some(step) }),
            Err(e) => return Err(e.into()),
        }
        losses.push(loss);
        if let Some(h) = hooks.as_deref_mut() {
            h.observe(step, net, &grads);
        }
    }
    Ok(TrainStats { steps, losses, diverged_at: None })
}

/// Mean over `eval` of ‖f_after(x) − f_before(x)‖₂.
pub fn measure_logit_shift(before: &DenseNet, after: &DenseNet, eval: ArrayView2<f64>) -> Result<f64, RunError> {
    if eval.nrows() == 0 {
        return Err(RunError::Empty("evaluation"));
    }
    if before.spec().widths != after.spec().widths {
        return Err(RunError::Mismatch("logit shift needs two nets of the same shape".into()));
    }
    let a = before.logits(eval)?;
    let b = after.logits(eval)?;
    let total: f64 = (&b - &a).axis_iter(Axis(0)).map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).sum();
    Ok(total / eval.nrows() as f64)
}

pub fn accuracy(logits: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let hits = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .filter(|(row, &y)| {
            let mut arg = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[arg] {
                    arg = j;
                }
            }
            arg == y
        })
        .count();
    hits as f64 / labels.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    /// 1-based hidden-layer index l.
    pub layer_index: usize,
    /// ‖Σ_s ∇Θ^(l) L(s)‖_F over the traced task.
    pub disp: f64,
    /// Σ_s ‖∇Θ^(l) L(s)‖_F.
    pub pathlen: f64,
    /// pathlen / disp (1 when disp is 0).
    pub c_traj: f64,
    /// ‖Θ_after − Θ_before‖_F / ‖Θ_before‖_F.
    pub rel_change: f64,
    /// Mean over sampled steps of |cos(g_old^(l), g_new^(l)(s))|.
    pub mean_abs_cos: f64,
    /// Spectral norm of g_old^(l).
    pub gold_spectral: f64,
    pub w_in: usize,
    pub w_out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// Training hit a non-finite loss or gradient; metrics are partial.
    Diverged,
    /// Task-1 eval accuracy fell below the configured gate.
    Underfit,
}

/// One (architecture, scenario, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub arch_id: String,
    pub scenario_id: String,
    pub seed: u64,
    pub status: RunStatus,
    /// Mean logit shift over task transitions (equal to the single shift for two tasks).
    pub observed_shift: f64,
    /// Shift at each transition t → t+1, measured on the eval data of tasks 1..t.
    pub transition_shifts: Vec<f64>,
    /// Traces of the first transition, one per hidden layer.
    pub layer_traces: Vec<LayerTrace>,
    pub task1_eval_acc: f64,
    pub task2_eval_acc: f64,
    /// ECE on task-1 eval data before and after training task 2.
    pub ece_before: f64,
    pub ece_after: f64,
    /// Temperature fitted on task-1 eval logits after task 2, and the ECE it yields.
    pub temperature: f64,
    pub ece_after_ts: f64,
    pub steps_per_task: Vec<usize>,
    pub final_losses: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub wall_time: f64,
}

impl RunRecord {
    pub fn key(&self) -> (String, String, u64) {
        (self.arch_id.clone(), self.scenario_id.clone(), self.seed)
    }

    pub fn ece_drift(&self) -> f64 {
        self.ece_after - self.ece_before
    }

    pub fn is_valid(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// Identifies the network to train.
#[derive(Debug, Clone)]
pub struct RunTarget<'a> {
    pub arch_id: &'a str,
    pub spec: &'a ArchitectureSpec,
    /// Per-architecture seed from the pool manifest.
    pub arch_seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Explicit step counts per task, bypassing `TrainConfig::steps_for`.
    pub steps: Option<Vec<usize>>,
    /// Saves `ADSN` checkpoints after every task into this directory.
    pub checkpoint_dir: Option<PathBuf>,
}

pub fn checkpoint_path(dir: &Path, arch_id: &str, scenario_id: &str, seed: u64, task: usize) -> PathBuf {
    dir.join(format!("{arch_id}__{scenario_id}__s{seed}__t{task}.adsn"))
}

/// init → train task 1 → g_old, ECE before → train task 2 with tracing →
/// shift and ECE after → remaining tasks, if any.
pub fn run_scenario(target: &RunTarget, scenario: &Scenario, cfg: &TrainConfig, seed: u64, opts: &RunOptions) -> Result<RunRecord, RunError> {
    cfg.validate()?;
    let started = Instant::now();
    let spec = target.spec;
    if spec.input_dim() != scenario.input_dim() || spec.output_dim() != scenario.num_classes {
        return Err(RunError::Mismatch(format!(
            "architecture {} has {}→{} but scenario {} needs {}→{}",
            target.arch_id,
            spec.input_dim(),
            spec.output_dim(),
            scenario.spec.id,
            scenario.input_dim(),
            scenario.num_classes
        )));
    }
    let num_tasks = scenario.tasks.len();
    let steps: Vec<usize> = match &opts.steps {
        Some(s) if s.len() == num_tasks => s.clone(),
        Some(s) => return Err(RunError::Config(format!("{} step counts for {num_tasks} tasks", s.len()))),
        None => scenario.tasks.iter().map(|t| cfg.steps_for(t.train.len())).collect(),
    };
    let run_seed = seeds::derive(target.arch_seed, &format!("run/{seed}/{}", cfg.seed));

    let mut net = DenseNet::init(spec, seeds::derive(run_seed, "init"))?;
    let mut state = OptimizerState::new(&net, cfg.lr, cfg.momentum, cfg.weight_decay)?;
    let mut record = RunRecord {
        arch_id: target.arch_id.to_string(),
        scenario_id: scenario.spec.id.clone(),
        seed,
        status: RunStatus::Ok,
        observed_shift: 0.0,
        transition_shifts: Vec::new(),
        layer_traces: Vec::new(),
        task1_eval_acc: 0.0,
        task2_eval_acc: 0.0,
        ece_before: 0.0,
        ece_after: 0.0,
        temperature: 1.0,
        ece_after_ts: 0.0,
        steps_per_task: steps.clone(),
        final_losses: Vec::new(),
        note: None,
        wall_time: 0.0,
    };
    let save = |net: &DenseNet, task: usize| -> Result<(), RunError> {
        if let Some(dir) = &opts.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            checkpoint::save(net, &checkpoint_path(dir, target.arch_id, &scenario.spec.id, seed, task))?;
        }
        Ok(())
    };
    let diverged = |record: &mut RunRecord, task: usize, step: usize, started: Instant| {
        record.status = RunStatus::Diverged;
        record.note = Some(format!("non-finite loss or gradient in task {task} at step {step}"));
        record.wall_time = started.elapsed().as_secs_f64();
    };

    let t1 = &scenario.tasks[0];
    let st = train_task(&mut net, &mut state, &t1.train, steps[0], cfg.batch_size, seeds::derive(run_seed, "shuffle/0"), None)?;
    record.final_losses.push(st.losses.last().copied().unwrap_or(0.0));
    if let Some(step) = st.diverged_at {
        diverged(&mut record, 1, step, started);
        return Ok(record);
    }
    save(&net, 1)?;

    let gold = compute_gold(&net, &scenario.calib, cfg.gold_mode)?;
    let logits_before = net.logits(t1.eval.images.view())?;
    record.task1_eval_acc = accuracy(logits_before.view(), &t1.eval.labels);
    let (conf, ok) = stats::confidences(logits_before.view(), &t1.eval.labels, 1.0);
    record.ece_before = stats::ece(&conf, &ok)?;
    if let Some(gate) = cfg.min_task1_acc {
        if record.task1_eval_acc < gate {
            record.status = RunStatus::Underfit;
            record.note = Some(format!("task-1 eval accuracy {:.4} below gate {gate}", record.task1_eval_acc));
        }
    }

    // remaining tasks; the first transition is traced
    let mut prev = net.clone();
    let mut seen_eval: Vec<&Dataset> = vec![&t1.eval];
    for t in 1..num_tasks {
        let task = &scenario.tasks[t];
        let shuffle = seeds::derive(run_seed, &format!("shuffle/{t}"));
        let st = if t == 1 {
            let mut hooks = TraceHooks::new(&gold, cfg.trace_every);
            let st = train_task(&mut net, &mut state, &task.train, steps[t], cfg.batch_size, shuffle, Some(&mut hooks))?;
            record.layer_traces = finalize_traces(&prev, &net, &gold, hooks.acc);
            st
        } else {
            train_task(&mut net, &mut state, &task.train, steps[t], cfg.batch_size, shuffle, None)?
        };
        record.final_losses.push(st.losses.last().copied().unwrap_or(0.0));
        if let Some(step) = st.diverged_at {
            diverged(&mut record, t + 1, step, started);
            return Ok(record);
        }
        save(&net, t + 1)?;

        let eval = Dataset::concat(&seen_eval);
        record.transition_shifts.push(measure_logit_shift(&prev, &net, eval.images.view())?);
        if t == 1 {
            let after = net.logits(t1.eval.images.view())?;
            let (conf, ok) = stats::confidences(after.view(), &t1.eval.labels, 1.0);
            record.ece_after = stats::ece(&conf, &ok)?;
            let ts = stats::temperature_scale(after.view(), &t1.eval.labels)?;
            record.temperature = ts.temperature;
            record.ece_after_ts = ts.scaled_ece;
            record.task2_eval_acc = accuracy(net.logits(task.eval.images.view())?.view(), &task.eval.labels);
        }
        seen_eval.push(&task.eval);
        prev = net.clone();
    }
    record.observed_shift = record.transition_shifts.iter().sum::<f64>() / record.transition_shifts.len().max(1) as f64;
    record.wall_time = started.elapsed().as_secs_f64();
    Ok(record)
}

fn finalize_traces(before: &DenseNet, after: &DenseNet, gold: &Gold, acc: Option<TraceAccum>) -> Vec<LayerTrace> {
    let spec = before.spec();
    (1..=spec.depth)
        .map(|l| {
            let (w_out, w_in) = spec.layer_shape(l);
            let wb = &before.weights()[l - 1];
            let wa = &after.weights()[l - 1];
            let rel_change = frobenius(&(wa - wb)) / frobenius(wb);
            let (disp, pathlen, mean_abs_cos) = match &acc {
                Some(a) => (
                    frobenius(&a.grad_sum[l - 1]),
                    a.pathlen[l - 1],
                    if a.cos_samples > 0 { a.cos_abs_sum[l - 1] / a.cos_samples as f64 } else { 0.0 },
                ),
                None => (0.0, 0.0, 0.0),
            };
            LayerTrace {
                layer_index: l,
                disp,
                pathlen,
                c_traj: if disp > 0.0 { pathlen / disp } else { 1.0 },
                rel_change,
                mean_abs_cos,
                gold_spectral: spectral_norm(gold.grads.layers[l - 1].view(), SPECTRAL_TOL).value,
                w_in,
                w_out,
            }
        })
        .collect()
}

/// Appends one JSON line per record.
pub fn write_records<W: Write>(records: &[RunRecord], mut w: W) -> Result<(), RunError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<RunRecord>, RunError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RunError::Stream { line: i + 1, msg: e.to_string() })?);
    }
    Ok(out)
}
