use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::StatsError;

pub const ECE_BINS: usize = 15;

/// Expected calibration error over 15 equal-width confidence bins. Bin `b`
/// covers `[b/15, (b+1)/15)`; the last bin also takes confidence 1.
pub fn ece(confidences: &[f64], correct: &[bool]) -> Result<f64, StatsError> {
    if confidences.len() != correct.len() {
        return Err(StatsError::Length(confidences.len(), correct.len()));
    }
    if confidences.is_empty() {
        return Err(StatsError::TooFew { need: 1, got: 0 });
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(StatsError::Invalid(format!("confidence {c} outside [0, 1]")));
    }
    let mut conf_sum = [0.0f64; ECE_BINS];
    let mut hits = [0usize; ECE_BINS];
    let mut counts = [0usize; ECE_BINS];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = ((c * ECE_BINS as f64) as usize).min(ECE_BINS - 1);
        conf_sum[b] += c;
        hits[b] += ok as usize;
        counts[b] += 1;
    }
    let n = confidences.len() as f64;
    let mut total = 0.0;
    for b in 0..ECE_BINS {
        if counts[b] > 0 {
            let m = counts[b] as f64;
            total += m / n * (conf_sum[b] / m - hits[b] as f64 / m).abs();
        }
    }
    Ok(total)
}

/// Max-softmax confidence and correctness of `logits / temperature`.
pub fn confidences(logits: ArrayView2<f64>, labels: &[usize], temperature: f64) -> (Vec<f64>, Vec<bool>) {
    let mut conf = Vec::with_capacity(labels.len());
    let mut correct = Vec::with_capacity(labels.len());
    for (row, &y) in logits.axis_iter(Axis(0)).zip(labels) {
        let mut arg = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[arg] {
                arg = j;
            }
        }
        let max = row[arg] / temperature;
        let sum: f64 = row.iter().map(|&z| (z / temperature - max).exp()).sum();
        conf.push(1.0 / sum);
        correct.push(arg == y);
    }
    (conf, correct)
}

/// Mean cross-entropy of `logits / temperature`.
pub fn nll(logits: ArrayView2<f64>, labels: &[usize], temperature: f64) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.axis_iter(Axis(0)).zip(labels) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &z| m.max(z / temperature));
        let lse = max + row.iter().map(|&z| (z / temperature - max).exp()).sum::<f64>().ln();
        total += lse - row[y] / temperature;
    }
    total / labels.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub temperature: f64,
    pub nll_at_one: f64,
    pub nll: f64,
    pub ece_at_one: f64,
    pub scaled_ece: f64,
    /// The optimum sits within tolerance of the search bound.
    pub at_bound: bool,
}

const LOG_T_RANGE: (f64, f64) = (-3.0, 3.0);
const GOLDEN_TOL: f64 = 1e-4;

/// Fits a scalar temperature by golden-section search on log T ∈ [−3, 3]
/// minimizing the NLL, then reports ECE before and after.
pub fn temperature_scale(logits: ArrayView2<f64>, labels: &[usize]) -> Result<TemperatureFit, StatsError> {
    if labels.is_empty() {
        return Err(StatsError::TooFew { need: 1, got: 0 });
    }
    if logits.nrows() != labels.len() {
        return Err(StatsError::Length(logits.nrows(), labels.len()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= logits.ncols()) {
        return Err(StatsError::Invalid(format!("label {y} out of range")));
    }
    let f = |log_t: f64| nll(logits, labels, log_t.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = LOG_T_RANGE;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut log_t = (a + b) / 2.0;
    let nll_at_one = f(0.0);
    let mut best = f(log_t);
    // the search is unimodal only in exact arithmetic; never return worse than T = 1
    if nll_at_one < best {
        log_t = 0.0;
        best = nll_at_one;
    }
    let at_bound = log_t - LOG_T_RANGE.0 < 2.0 * GOLDEN_TOL || LOG_T_RANGE.1 - log_t < 2.0 * GOLDEN_TOL;
    let temperature = log_t.exp();
    let (c1, k1) = confidences(logits, labels, 1.0);
    let (ct, kt) = confidences(logits, labels, temperature);
    Ok(TemperatureFit { temperature, nll_at_one, nll: best, ece_at_one: ece(&c1, &k1)?, scaled_ece: ece(&ct, &kt)?, at_bound })
}
