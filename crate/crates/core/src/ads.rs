//! The architecture-driven shift score.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::CalibrationParams;
use crate::nncore::ArchitectureSpec;

#[derive(Debug, Error, PartialEq)]
pub enum AdsError {
    #[error("parameter {name} is not finite ({value})")]
    NonFinite { name: &'static str, value: f64 },
    #[error("invalid architecture: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdsScore {
    pub value: f64,
    /// One term per hidden layer l = 1..L.
    pub per_layer_terms: Vec<f64>,
    pub params_id: String,
}

/// Σ_l (w^(l-1))^(α+½) · (w^(l))^β · |l^b e^(−cl)| over hidden layers, with
/// w^(0) the input dimension. The output layer does not contribute.
///
/// The score is raw: values under different parameters are not comparable.
pub fn compute_ads(spec: &ArchitectureSpec, params: &CalibrationParams) -> Result<AdsScore, AdsError> {
    for (name, value) in [("alpha", params.alpha), ("beta", params.beta), ("b", params.b), ("c", params.c)] {
        if !value.is_finite() {
            return Err(AdsError::NonFinite { name, value });
        }
    }
    if !spec.is_valid() {
        let msgs: Vec<String> = spec.diagnostics().iter().map(|d| d.to_string()).collect();
        return Err(AdsError::InvalidSpec(msgs.join("; ")));
    }
    let w = &spec.widths;
    let per_layer_terms: Vec<f64> = (1..=spec.depth)
        .map(|l| {
            let lf = l as f64;
            let depth_factor = (lf.powf(params.b) * (-params.c * lf).exp()).abs();
            (w[l - 1] as f64).powf(params.alpha + 0.5) * (w[l] as f64).powf(params.beta) * depth_factor
        })
        .collect();
    let value = per_layer_terms.iter().sum();
    Ok(AdsScore { value, per_layer_terms, params_id: params.source.id.clone() })
}

/// CSV with columns `arch_id, ads, per_layer_terms` (terms joined by `;`).
pub fn write_ads_csv<W: Write>(rows: &[(String, AdsScore)], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["arch_id", "ads", "per_layer_terms"])?;
    for (id, score) in rows {
        let terms: Vec<String> = score.per_layer_terms.iter().map(|t| t.to_string()).collect();
        out.write_record([id.clone(), score.value.to_string(), terms.join(";")])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(widths: &[usize]) -> ArchitectureSpec {
        ArchitectureSpec::from_widths(widths.to_vec()).unwrap()
    }

    #[test]
    fn hand_examples() {
        let s = compute_ads(&spec(&[4, 9, 10]), &CalibrationParams::manual(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.value, 2.0);
        let s = compute_ads(&spec(&[4, 4, 4, 10]), &CalibrationParams::manual(0.0, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!(s.per_layer_terms, vec![2.0, 4.0]);
        assert_eq!(s.value, 6.0);
    }

    #[test]
    fn rejects_non_finite() {
        let p = CalibrationParams::manual(f64::NAN, 0.0, 0.0, 0.0);
        assert!(matches!(compute_ads(&spec(&[4, 9, 10]), &p), Err(AdsError::NonFinite { name: "alpha", .. })));
        let p = CalibrationParams::manual(0.0, 0.0, 0.0, f64::INFINITY);
        assert!(compute_ads(&spec(&[4, 9, 10]), &p).is_err());
    }
}
