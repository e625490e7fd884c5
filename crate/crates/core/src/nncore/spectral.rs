use ndarray::{Array1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 10_000;

/// Result of a power-iteration run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value by power iteration on AᵀA.
///
/// Stops once the estimate changes by less than `tol` relative to itself.
/// The start vector is drawn from a fixed-seed generator so results are
/// reproducible. An all-zero matrix returns 0 without iterating.
pub fn spectral_norm(matrix: ArrayView2<f64>, tol: f64) -> SpectralNorm {
    if matrix.is_empty() || matrix.iter().all(|&v| v == 0.0) {
        return SpectralNorm { value: 0.0, iterations: 0, converged: true };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5eed);
    let mut v: Array1<f64> = (0..matrix.ncols()).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);

    let mut sigma = 0.0;
    for it in 1..=MAX_ITERATIONS {
        let u = matrix.dot(&v);
        let next = norm(&u);
        let mut w = matrix.t().dot(&u);
        if norm(&w) == 0.0 {
            // start vector landed in the null space; restart from a fresh draw
            v = (0..matrix.ncols()).map(|_| StandardNormal.sample(&mut rng)).collect();
            normalize(&mut v);
            continue;
        }
        normalize(&mut w);
        v = w;
        if it > 1 && (next - sigma).abs() <= tol * next {
            // one more product with the updated vector gives the sharper estimate
            let refined = norm(&matrix.dot(&v)).max(next);
            return SpectralNorm { value: refined, iterations: it, converged: true };
        }
        sigma = next;
    }
    SpectralNorm { value: sigma, iterations: MAX_ITERATIONS, converged: false }
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

fn normalize(v: &mut Array1<f64>) {
    let n = norm(v);
    if n > 0.0 {
        v.mapv_inplace(|x| x / n);
    }
}
