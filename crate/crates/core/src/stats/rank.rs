use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_pair, StatsError};

/// 1-based ranks with ties sharing the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Undefined("constant vector"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 3)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Kendall tau-b by pair enumeration.
pub fn kendall(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 3)?;
    let n = x.len();
    let (mut conc, mut disc, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tie_x += 1;
            } else if dy == 0.0 {
                tie_y += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                conc += 1;
            } else {
                disc += 1;
            }
        }
    }
    let n1 = (conc + disc + tie_x) as f64;
    let n2 = (conc + disc + tie_y) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return Err(StatsError::Undefined("constant vector"));
    }
    Ok(((conc - disc) as f64 / (n1 * n2).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided permutation p-value `(1 + #{|T_perm| ≥ |T_obs|}) / (n_perm + 1)`,
/// permuting `y` against fixed `x`.
pub fn perm_p_value<F>(x: &[f64], y: &[f64], statistic: F, n_perm: usize, seed: u64) -> Result<f64, StatsError>
where
    F: Fn(&[f64], &[f64]) -> Result<f64, StatsError>,
{
    if n_perm < 999 {
        return Err(StatsError::Invalid(format!("n_perm must be ≥ 999, got {n_perm}")));
    }
    let observed = statistic(x, y)?.abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = y.to_vec();
    let mut hits = 0usize;
    for _ in 0..n_perm {
        perm.shuffle(&mut rng);
        // a degenerate permuted statistic cannot happen when the observed one
        // is defined, since permutation keeps the multiset of values
        let t = statistic(x, &perm)?.abs();
        // tolerance absorbs rounding in statistics that equal the observed value exactly
        if t >= observed - 1e-12 {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (n_perm + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    /// Resamples on which the statistic was undefined.
    pub skipped: usize,
}

/// Percentile bootstrap over paired resamples.
pub fn bootstrap_ci<F>(x: &[f64], y: &[f64], statistic: F, n_boot: usize, level: f64, seed: u64) -> Result<BootstrapCi, StatsError>
where
    F: Fn(&[f64], &[f64]) -> Result<f64, StatsError>,
{
    check_pair(x, y, 2)?;
    if n_boot < 1000 {
        return Err(StatsError::Invalid(format!("n_boot must be ≥ 1000, got {n_boot}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::Invalid(format!("level must be in (0, 1), got {level}")));
    }
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    let mut stats = Vec::with_capacity(n_boot);
    let mut skipped = 0;
    for _ in 0..n_boot {
        for k in 0..n {
            let i = rng.gen_range(0..n);
            bx[k] = x[i];
            by[k] = y[i];
        }
        match statistic(&bx, &by) {
            Ok(v) => stats.push(v),
            Err(StatsError::Undefined(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if stats.is_empty() {
        return Err(StatsError::Undefined("every bootstrap resample was degenerate"));
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapCi { low: quantile(&stats, alpha), high: quantile(&stats, 1.0 - alpha), skipped })
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionConsistency {
    pub dc: f64,
    /// Pairs with a strictly positive or negative product.
    pub pairs: usize,
    /// Pairs whose product is exactly zero.
    pub excluded: usize,
}

/// Fraction of pairs `i < j` ordered the same way by both vectors.
pub fn direction_consistency(a: &[f64], b: &[f64]) -> Result<DirectionConsistency, StatsError> {
    check_pair(a, b, 2)?;
    let (mut agree, mut pairs, mut excluded) = (0usize, 0usize, 0usize);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let p = (a[i] - a[j]) * (b[i] - b[j]);
            if p == 0.0 {
                excluded += 1;
            } else {
                pairs += 1;
                if p > 0.0 {
                    agree += 1;
                }
            }
        }
    }
    if pairs == 0 {
        return Err(StatsError::Undefined("all pairs tied"));
    }
    Ok(DirectionConsistency { dc: agree as f64 / pairs as f64, pairs, excluded })
}
