use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ArchitectureSpec, NetError};

/// Rows processed per chunk when only logits are needed.
const EVAL_CHUNK: usize = 512;

/// Bias-free ReLU fully-connected network with 64-bit weights.
///
/// `weights[l - 1]` holds Θ^(l) with shape `w^(l) × w^(l-1)`; the last matrix
/// is the linear output head.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    spec: ArchitectureSpec,
    weights: Vec<Array2<f64>>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// a^(0) (the input batch) through a^(L), each `batch × w^(l)`.
    pub activations: Vec<Array2<f64>>,
    /// z^(1) through z^(L+1); the last entry holds the logits.
    pub preactivations: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Array2<f64> {
        self.preactivations.last().expect("trace has an output layer")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradKind {
    /// Gradient of the mean cross-entropy loss (g_new).
    LossGrad,
    /// Gradient of the mean true-class logit (g_old).
    LogitGrad,
}

/// One gradient matrix per weight layer, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub kind: GradKind,
    pub layers: Vec<Array2<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNet, kind: GradKind) -> Self {
        let layers = net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        GradientSet { kind, layers }
    }

    pub fn frobenius_norms(&self) -> Vec<f64> {
        self.layers.iter().map(frobenius).collect()
    }

    /// Index (0-based) of the first layer containing a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.layers.iter().position(|g| g.iter().any(|v| !v.is_finite()))
    }

    /// `self += weight * other`.
    pub fn add_scaled(&mut self, weight: f64, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.scaled_add(weight, b);
        }
    }
}

pub fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl DenseNet {
    /// Kaiming-normal (fan-in) initialization: entries of Θ^(l) are drawn
    /// from N(0, 2 / w^(l-1)), layer by layer in row-major order.
    pub fn init(spec: &ArchitectureSpec, seed: u64) -> Result<Self, NetError> {
        let diags = spec.diagnostics();
        if !diags.is_empty() {
            return Err(NetError::InvalidSpec(diags));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (1..=spec.num_layers())
            .map(|l| {
                let (rows, cols) = spec.layer_shape(l);
                let std = (2.0 / cols as f64).sqrt();
                Array2::from_shape_simple_fn((rows, cols), || {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * std
                })
            })
            .collect();
        Ok(DenseNet { spec: spec.clone(), weights })
    }

    pub fn from_weights(spec: ArchitectureSpec, weights: Vec<Array2<f64>>) -> Result<Self, NetError> {
        let diags = spec.diagnostics();
        if !diags.is_empty() {
            return Err(NetError::InvalidSpec(diags));
        }
        if weights.len() != spec.num_layers() {
            return Err(NetError::LayerCount { expected: spec.num_layers(), found: weights.len() });
        }
        for (i, w) in weights.iter().enumerate() {
            let expected = spec.layer_shape(i + 1);
            if w.dim() != expected {
                return Err(NetError::WeightShape { layer: i + 1, expected, found: w.dim() });
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(NetError::NonFiniteWeights { layer: i + 1 });
            }
        }
        Ok(DenseNet { spec, weights })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    /// Mutable access to Θ^(l) (1-based).
    pub fn layer_mut(&mut self, l: usize) -> &mut Array2<f64> {
        &mut self.weights[l - 1]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    fn check_input(&self, batch: &ArrayView2<f64>) -> Result<(), NetError> {
        if batch.ncols() != self.spec.input_dim() {
            return Err(NetError::InputDim { expected: self.spec.input_dim(), found: batch.ncols() });
        }
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<ForwardTrace, NetError> {
        self.check_input(&batch)?;
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.weights.len());
        let mut preactivations = Vec::with_capacity(self.weights.len());
        activations.push(batch.to_owned());
        for (l, w) in self.weights.iter().enumerate() {
            let z = activations[l].dot(&w.t());
            if l < last {
                activations.push(z.mapv(relu));
            }
            preactivations.push(z);
        }
        Ok(ForwardTrace { activations, preactivations })
    }

    /// Logits only, computed in chunks without keeping intermediate layers.
    pub fn logits(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        self.check_input(&batch)?;
        let mut out = Array2::zeros((batch.nrows(), self.spec.output_dim()));
        let last = self.weights.len() - 1;
        let mut start = 0;
        while start < batch.nrows() {
            let end = (start + EVAL_CHUNK).min(batch.nrows());
            let mut a = batch.slice(s![start..end, ..]).to_owned();
            for (l, w) in self.weights.iter().enumerate() {
                a = a.dot(&w.t());
                if l < last {
                    a.mapv_inplace(relu);
                }
            }
            out.slice_mut(s![start..end, ..]).assign(&a);
            start = end;
        }
        Ok(out)
    }

    fn check_labels(&self, labels: &[usize], batch: usize) -> Result<(), NetError> {
        if batch == 0 {
            return Err(NetError::EmptyBatch);
        }
        if labels.len() != batch {
            return Err(NetError::LabelCount { expected: batch, found: labels.len() });
        }
        let classes = self.spec.output_dim();
        if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
            return Err(NetError::LabelOutOfRange { label, classes });
        }
        Ok(())
    }

    /// Mean softmax cross-entropy over the batch and its gradient.
    pub fn loss_and_backward(&self, trace: &ForwardTrace, labels: &[usize]) -> Result<(f64, GradientSet), NetError> {
        let batch = trace.batch_size();
        self.check_labels(labels, batch)?;
        let logits = trace.logits();
        let inv_b = 1.0 / batch as f64;
        let mut delta = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for ((row, mut d), &y) in logits.axis_iter(Axis(0)).zip(delta.axis_iter_mut(Axis(0))).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
            let lse = max + sum.ln();
            loss += lse - row[y];
            for (dj, &z) in d.iter_mut().zip(row.iter()) {
                *dj = (z - lse).exp() * inv_b;
            }
            d[y] -= inv_b;
        }
        let grads = self.backprop(trace, delta, GradKind::LossGrad);
        Ok((loss * inv_b, grads))
    }

    /// Gradient of the batch mean of the true-class logit f^(y)(x).
    pub fn logit_gradient(&self, batch: ArrayView2<f64>, class_indices: &[usize]) -> Result<GradientSet, NetError> {
        let trace = self.forward(batch)?;
        self.check_labels(class_indices, trace.batch_size())?;
        let inv_b = 1.0 / trace.batch_size() as f64;
        let mut delta = Array2::zeros(trace.logits().raw_dim());
        for (mut d, &y) in delta.axis_iter_mut(Axis(0)).zip(class_indices) {
            d[y] = inv_b;
        }
        Ok(self.backprop(&trace, delta, GradKind::LogitGrad))
    }

    /// Error-signal recursion δ^(l) = Θ^(l+1)ᵀ δ^(l+1) ⊙ σ'(z^(l)), with
    /// ∇Θ^(l) = δ^(l) a^(l-1)ᵀ summed over the (already 1/B-weighted) batch.
    fn backprop(&self, trace: &ForwardTrace, output_delta: Array2<f64>, kind: GradKind) -> GradientSet {
        let n = self.weights.len();
        let mut layers: Vec<Array2<f64>> = Vec::with_capacity(n);
        let mut delta = output_delta;
        for l in (0..n).rev() {
            layers.push(delta.t().dot(&trace.activations[l]));
            if l > 0 {
                let mut prev = delta.dot(&self.weights[l]);
                Zip::from(&mut prev).and(&trace.preactivations[l - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
        layers.reverse();
        GradientSet { kind, layers }
    }
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// SGD with heavy-ball momentum and L2 weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub momentum_buffers: Vec<Array2<f64>>,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    pub fn new(net: &DenseNet, lr: f64, momentum: f64, weight_decay: f64) -> Result<Self, NetError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(NetError::Hyperparameter(format!("learning rate must be > 0, got {lr}")));
        }
        if !(momentum.is_finite() && weight_decay.is_finite()) {
            return Err(NetError::Hyperparameter("momentum and weight decay must be finite".into()));
        }
        let momentum_buffers = net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        Ok(OptimizerState { momentum_buffers, lr, momentum, weight_decay })
    }

    /// buffer ← momentum·buffer + (grad + wd·weight); weight ← weight − lr·buffer.
    ///
    /// The whole gradient set is checked before any weight is touched.
    pub fn step(&mut self, net: &mut DenseNet, grads: &GradientSet) -> Result<(), NetError> {
        if grads.layers.len() != net.weights.len() {
            return Err(NetError::LayerCount { expected: net.weights.len(), found: grads.layers.len() });
        }
        for (i, (g, w)) in grads.layers.iter().zip(&net.weights).enumerate() {
            if g.dim() != w.dim() {
                return Err(NetError::WeightShape { layer: i + 1, expected: w.dim(), found: g.dim() });
            }
        }
        if let Some(i) = grads.first_non_finite() {
            return Err(NetError::NonFiniteGradient { layer: i + 1 });
        }
        let (lr, m, wd) = (self.lr, self.momentum, self.weight_decay);
        for ((w, b), g) in net.weights.iter_mut().zip(&mut self.momentum_buffers).zip(&grads.layers) {
            Zip::from(w).and(b).and(g).for_each(|w, b, &g| {
                *b = m * *b + (g + wd * *w);
                *w -= lr * *b;
            });
        }
        Ok(())
    }
}
