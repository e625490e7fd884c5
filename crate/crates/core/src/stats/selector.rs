use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StatsError;

/// Selected fractions of the lowest-ADS architectures.
pub const DEFAULT_Q_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorReport {
    /// Selected fraction q per row.
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// Average precision over the full ranking.
    pub auc_pr: f64,
    pub positive_rate: f64,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Architectures in selection order: ascending score, index breaks ties.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

/// Step-interpolated area under the precision/recall curve of a ranking.
pub fn average_precision(order: &[usize], positive: &[bool]) -> f64 {
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if positive[i] {
            tp += 1;
            ap += tp as f64 / (k + 1) as f64;
        }
    }
    ap / n_pos as f64
}

fn labels(drift: &[f64]) -> Result<Vec<bool>, StatsError> {
    let med = median(drift);
    let positive: Vec<bool> = drift.iter().map(|&d| d < med).collect();
    if !positive.iter().any(|&p| p) {
        return Err(StatsError::Undefined("no drift below the median"));
    }
    Ok(positive)
}

/// Treats "drift below the median" as the stable class and selects the
/// lowest-score fraction q of architectures for each q in `grid`.
pub fn pr_analysis(scores: &[f64], ece_drift: &[f64], grid: &[f64]) -> Result<SelectorReport, StatsError> {
    super::check_pair(scores, ece_drift, 4)?;
    if grid.iter().any(|q| !(*q > 0.0 && *q <= 1.0)) {
        return Err(StatsError::Invalid("selection fractions must be in (0, 1]".into()));
    }
    let positive = labels(ece_drift)?;
    let n = scores.len();
    let n_pos = positive.iter().filter(|&&p| p).count();
    let order = ranking(scores);
    let mut precision = Vec::with_capacity(grid.len());
    let mut recall = Vec::with_capacity(grid.len());
    for &q in grid {
        let k = ((q * n as f64).ceil() as usize).clamp(1, n);
        let tp = order[..k].iter().filter(|&&i| positive[i]).count();
        precision.push(tp as f64 / k as f64);
        recall.push(tp as f64 / n_pos as f64);
    }
    Ok(SelectorReport {
        thresholds: grid.to_vec(),
        precision,
        recall,
        auc_pr: average_precision(&order, &positive),
        positive_rate: n_pos as f64 / n as f64,
    })
}

/// Mean average precision of uniformly random rankings.
pub fn random_baseline(ece_drift: &[f64], n_perm: usize, seed: u64) -> Result<f64, StatsError> {
    if ece_drift.len() < 4 {
        return Err(StatsError::TooFew { need: 4, got: ece_drift.len() });
    }
    if n_perm == 0 {
        return Err(StatsError::Invalid("n_perm must be ≥ 1".into()));
    }
    let positive = labels(ece_drift)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..ece_drift.len()).collect();
    let mut total = 0.0;
    for _ in 0..n_perm {
        order.shuffle(&mut rng);
        total += average_precision(&order, &positive);
    }
    Ok(total / n_perm as f64)
}
