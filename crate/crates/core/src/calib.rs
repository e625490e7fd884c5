//! Fits of the four ADS parameters from layer traces: the width exponents
//! (α, β) by log-log regression of relative weight change, and the depth
//! profile (b, c) by a log-linear fit of the mean |cos θ| per layer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clrun::{LayerTrace, RunRecord};
use crate::stats;

/// Floor applied to mean |cos θ| before taking logs.
pub const COS_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("insufficient records: need {need}, got {got}")]
    Insufficient { need: usize, got: usize },
    #[error("degenerate design: {0}")]
    Degenerate(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("profile {path}: {msg}")]
    Profile { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordinary least squares result.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub std_err: Vec<f64>,
    pub fitted: Vec<f64>,
    pub r2: f64,
    pub rss: f64,
}

/// Least squares by Householder QR. Columns whose diagonal entry in R falls
/// below `1e-10 · max|R_jj|` make the design rank-deficient.
pub fn ols(x: &Array2<f64>, y: &[f64]) -> Result<OlsFit, CalibError> {
    let (n, p) = x.dim();
    if n != y.len() {
        return Err(CalibError::InvalidRecord(format!("{n} rows but {} responses", y.len())));
    }
    if n < p {
        return Err(CalibError::Insufficient { need: p, got: n });
    }
    let mut r = x.clone();
    let mut qty = Array1::from_vec(y.to_vec());
    for j in 0..p {
        let norm = (j..n).map(|i| r[[i, j]] * r[[i, j]]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[[j, j]] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..n).map(|i| r[[i, j]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|a| a * a).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for k in j..p {
            let dot: f64 = (j..n).map(|i| v[i - j] * r[[i, k]]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in j..n {
                r[[i, k]] -= f * v[i - j];
            }
        }
        let dot: f64 = (j..n).map(|i| v[i - j] * qty[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in j..n {
            qty[i] -= f * v[i - j];
        }
    }
    let max_diag = (0..p).map(|j| r[[j, j]].abs()).fold(0.0, f64::max);
    if let Some(j) = (0..p).find(|&j| r[[j, j]].abs() <= 1e-10 * max_diag.max(f64::MIN_POSITIVE)) {
        return Err(CalibError::Degenerate(format!("design column {j} is linearly dependent on the others")));
    }
    // back substitution R β = Qᵀy
    let mut coef = vec![0.0; p];
    for j in (0..p).rev() {
        let s: f64 = (j + 1..p).map(|k| r[[j, k]] * coef[k]).sum();
        coef[j] = (qty[j] - s) / r[[j, j]];
    }
    let fitted: Vec<f64> = (0..n).map(|i| (0..p).map(|k| x[[i, k]] * coef[k]).sum()).collect();
    let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    let r2 = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 1.0 };

    // standard errors from diag((RᵀR)⁻¹) · σ²
    let sigma2 = if n > p { rss / (n - p) as f64 } else { 0.0 };
    let mut rinv = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        rinv[[j, j]] = 1.0 / r[[j, j]];
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|k| r[[i, k]] * rinv[[k, j]]).sum();
            rinv[[i, j]] = -s / r[[i, i]];
        }
    }
    let std_err = (0..p).map(|i| ((0..p).map(|j| rinv[[i, j]] * rinv[[i, j]]).sum::<f64>() * sigma2).sqrt()).collect();
    Ok(OlsFit { coef, std_err, fitted, r2, rss })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthFit {
    pub alpha: f64,
    pub beta: f64,
    pub intercept: f64,
    pub se_alpha: f64,
    pub se_beta: f64,
    /// Pearson r between fitted and observed log relative change.
    pub pearson_r: f64,
    pub r2: f64,
    pub n: usize,
}

/// OLS of log(rel_change) on [1, log w_in, log w_out].
pub fn fit_width_exponents(records: &[LayerTrace]) -> Result<WidthFit, CalibError> {
    let mut shapes: Vec<(usize, usize)> = records.iter().map(|r| (r.w_in, r.w_out)).collect();
    shapes.sort_unstable();
    shapes.dedup();
    if records.len() < 3 {
        return Err(CalibError::Insufficient { need: 3, got: records.len() });
    }
    if let Some(r) = records.iter().find(|r| !(r.rel_change > 0.0 && r.rel_change.is_finite())) {
        return Err(CalibError::InvalidRecord(format!("layer {} has rel_change {}", r.layer_index, r.rel_change)));
    }
    let x = Array2::from_shape_fn((records.len(), 3), |(i, j)| match j {
        0 => 1.0,
        1 => (records[i].w_in as f64).ln(),
        _ => (records[i].w_out as f64).ln(),
    });
    let y: Vec<f64> = records.iter().map(|r| r.rel_change.ln()).collect();
    let fit = ols(&x, &y).map_err(|e| match e {
        CalibError::Degenerate(_) => CalibError::Degenerate(format!("widths do not vary independently ({} distinct (w_in, w_out) pairs)", shapes.len())),
        e => e,
    })?;
    let pearson_r = if fit.rss == 0.0 { 1.0 } else { stats::pearson(&fit.fitted, &y).unwrap_or(0.0) };
    Ok(WidthFit {
        alpha: fit.coef[1],
        beta: fit.coef[2],
        intercept: fit.coef[0],
        se_alpha: fit.std_err[1],
        se_beta: fit.std_err[2],
        pearson_r,
        r2: fit.r2,
        n: records.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthFit {
    pub b: f64,
    pub c: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
    /// Records whose mean |cos θ| was raised to the floor.
    pub floored: usize,
}

impl DepthFit {
    /// Continuous peak b/c of l^b e^(−cl), when it exists.
    pub fn peak(&self) -> Option<f64> {
        (self.b > 0.0 && self.c > 0.0).then(|| self.b / self.c)
    }
}

/// OLS of log(max(mean_abs_cos, floor)) on [1, log l, −l].
pub fn fit_depth_profile(records: &[LayerTrace]) -> Result<DepthFit, CalibError> {
    if records.len() < 3 {
        return Err(CalibError::Insufficient { need: 3, got: records.len() });
    }
    let mut layers: Vec<usize> = records.iter().map(|r| r.layer_index).collect();
    layers.sort_unstable();
    layers.dedup();
    if layers.len() < 3 {
        return Err(CalibError::Degenerate(format!("need at least 3 distinct layer indices, got {}", layers.len())));
    }
    if let Some(r) = records.iter().find(|r| r.layer_index == 0 || !r.mean_abs_cos.is_finite()) {
        return Err(CalibError::InvalidRecord(format!("layer {} has mean |cos| {}", r.layer_index, r.mean_abs_cos)));
    }
    let floored = records.iter().filter(|r| r.mean_abs_cos < COS_FLOOR).count();
    let x = Array2::from_shape_fn((records.len(), 3), |(i, j)| {
        let l = records[i].layer_index as f64;
        match j {
            0 => 1.0,
            1 => l.ln(),
            _ => -l,
        }
    });
    let y: Vec<f64> = records.iter().map(|r| r.mean_abs_cos.max(COS_FLOOR).ln()).collect();
    let fit = ols(&x, &y)?;
    Ok(DepthFit { b: fit.coef[1], c: fit.coef[2], intercept: fit.coef[0], r2: fit.r2, n: records.len(), floored })
}

/// Exact argmax over l ∈ 1..=depth of l^b e^(−cl) (smallest l on ties).
pub fn peak_layer(b: f64, c: f64, depth: usize) -> usize {
    let f = |l: usize| b * (l as f64).ln() - c * l as f64;
    (1..=depth).fold(1, |best, l| if f(l) > f(best) { l } else { best })
}

/// Where the calibration traces came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ParamsSource {
    /// Profile id, e.g. `small_shift` or `split_m@0.3`.
    pub id: String,
    pub scenarios: Vec<String>,
    pub subset_fraction: f64,
    pub n_runs: usize,
    pub n_archs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
    pub c: f64,
    pub fit_r2_width: f64,
    pub fit_r2_depth: f64,
    pub n_layer_records: usize,
    pub width_pearson_r: f64,
    pub se_alpha: f64,
    pub se_beta: f64,
    /// Records whose mean |cos θ| hit the log floor.
    pub cos_floored: usize,
    /// r² of the global depth fit restricted to each network depth.
    #[serde(default)]
    pub depth_r2_by_depth: BTreeMap<String, f64>,
    pub source: ParamsSource,
}

impl CalibrationParams {
    /// Parameters set by hand, without fit diagnostics.
    pub fn manual(alpha: f64, beta: f64, b: f64, c: f64) -> Self {
        CalibrationParams {
            alpha,
            beta,
            b,
            c,
            fit_r2_width: 0.0,
            fit_r2_depth: 0.0,
            n_layer_records: 0,
            width_pearson_r: 0.0,
            se_alpha: 0.0,
            se_beta: 0.0,
            cos_floored: 0,
            depth_r2_by_depth: BTreeMap::new(),
            source: ParamsSource { id: "manual".into(), ..ParamsSource::default() },
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.alpha, self.beta, self.b, self.c].iter().all(|v| v.is_finite())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("params serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibError> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CalibError> {
        let text = std::fs::read_to_string(path)?;
        let p = Self::from_toml(&text).map_err(|e| CalibError::Profile { path: path.to_path_buf(), msg: e.to_string() })?;
        if !p.is_finite() {
            return Err(CalibError::Profile { path: path.to_path_buf(), msg: "non-finite parameter".into() });
        }
        Ok(p)
    }

    /// `<dir>/<id>.toml`.
    pub fn load_profile(dir: &Path, id: &str) -> Result<Self, CalibError> {
        Self::load(&dir.join(format!("{id}.toml")))
    }
}

/// Pools the layer traces of all valid runs and fits both laws.
pub fn calibrate_params(runs: &[RunRecord], source: ParamsSource) -> Result<CalibrationParams, CalibError> {
    let valid: Vec<&RunRecord> = runs.iter().filter(|r| r.is_valid()).collect();
    let traces: Vec<LayerTrace> = valid.iter().flat_map(|r| r.layer_traces.iter().cloned()).collect();
    let width = fit_width_exponents(&traces)?;
    let depth = fit_depth_profile(&traces)?;

    let mut by_depth: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &valid {
        let entry = by_depth.entry(r.layer_traces.len()).or_default();
        for t in &r.layer_traces {
            let l = t.layer_index as f64;
            entry.0.push(t.mean_abs_cos.max(COS_FLOOR).ln());
            entry.1.push(depth.intercept + depth.b * l.ln() - depth.c * l);
        }
    }
    let depth_r2_by_depth = by_depth
        .into_iter()
        .map(|(d, (obs, pred))| {
            let mean = obs.iter().sum::<f64>() / obs.len() as f64;
            let tss: f64 = obs.iter().map(|v| (v - mean) * (v - mean)).sum();
            let rss: f64 = obs.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum();
            let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
            (d.to_string(), r2)
        })
        .collect();

    let mut archs: Vec<&str> = valid.iter().map(|r| r.arch_id.as_str()).collect();
    archs.sort_unstable();
    archs.dedup();
    let mut source = source;
    source.n_runs = valid.len();
    source.n_archs = archs.len();
    Ok(CalibrationParams {
        alpha: width.alpha,
        beta: width.beta,
        b: depth.b,
        c: depth.c,
        fit_r2_width: width.r2,
        fit_r2_depth: depth.r2,
        n_layer_records: traces.len(),
        width_pearson_r: width.pearson_r,
        se_alpha: width.se_alpha,
        se_beta: width.se_beta,
        cos_floored: depth.floored,
        depth_r2_by_depth,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    pub(crate) fn trace(l: usize, w_in: usize, w_out: usize, rel: f64, cos: f64) -> LayerTrace {
        LayerTrace { layer_index: l, disp: 1.0, pathlen: 1.0, c_traj: 1.0, rel_change: rel, mean_abs_cos: cos, gold_spectral: 1.0, w_in, w_out }
    }

    #[test]
    fn ols_recovers_line_and_flags_collinearity() {
        let x = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let fit = ols(&x, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-12 && (fit.coef[1] - 2.0).abs() < 1e-12);
        assert!(fit.std_err.iter().all(|s| *s < 1e-7));
        let x = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        assert!(matches!(ols(&x, &[1.0, 2.0, 3.0]), Err(CalibError::Degenerate(_))));
    }

    #[test]
    fn ols_standard_errors_match_closed_form() {
        // simple regression: se(slope) = sqrt(σ² / Σ(x - x̄)²)
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [0.1, 0.9, 2.2, 2.8, 4.1];
        let x = Array2::from_shape_fn((5, 2), |(i, j)| if j == 0 { 1.0 } else { xs[i] });
        let fit = ols(&x, &ys).unwrap();
        let sxx: f64 = xs.iter().map(|v| (v - 2.0) * (v - 2.0)).sum();
        let se = (fit.rss / 3.0 / sxx).sqrt();
        assert!((fit.std_err[1] - se).abs() < 1e-12);
    }

    #[test]
    fn constant_response_gives_zero_exponents() {
        let recs = vec![trace(1, 256, 512, 0.1, 0.5), trace(2, 512, 256, 0.1, 0.5), trace(3, 1024, 1024, 0.1, 0.5), trace(1, 784, 256, 0.1, 0.5)];
        let w = fit_width_exponents(&recs).unwrap();
        assert!(w.alpha.abs() < 1e-12 && w.beta.abs() < 1e-12);
        let d = fit_depth_profile(&recs).unwrap();
        assert!(d.b.abs() < 1e-12 && d.c.abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let same = vec![trace(1, 256, 256, 0.1, 0.5), trace(2, 256, 256, 0.2, 0.4), trace(3, 256, 256, 0.3, 0.3)];
        assert!(matches!(fit_width_exponents(&same), Err(CalibError::Degenerate(_))));
        let one_layer = vec![trace(2, 256, 512, 0.1, 0.5), trace(2, 512, 256, 0.2, 0.4), trace(2, 1024, 256, 0.3, 0.3)];
        assert!(matches!(fit_depth_profile(&one_layer), Err(CalibError::Degenerate(_))));
        assert!(matches!(fit_width_exponents(&same[..2]), Err(CalibError::Insufficient { .. })));
    }

    #[test]
    fn peak_layer_is_discrete_argmax() {
        assert_eq!(peak_layer(2.0, 0.5, 10), 4);
        assert_eq!(peak_layer(0.0, 0.0, 10), 1);
        assert_eq!(peak_layer(3.0, 0.1, 10), 10);
    }

    #[test]
    fn params_toml_round_trip() {
        let mut p = CalibrationParams::manual(0.2, -0.4, 2.0, 0.5);
        p.depth_r2_by_depth.insert("10".into(), 0.75);
        let back = CalibrationParams::from_toml(&p.to_toml()).unwrap();
        assert_eq!(back, p);
    }
}
