//! Shared fixtures for the benchmarks.

use ads_core::datasets::{Dataset, DatasetName, Split};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random standardized-looking inputs with 10 labels.
pub fn random_batch(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = Array2::from_shape_simple_fn((n, dim), || rng.gen_range(-1.0..1.0));
    let labels = (0..n).map(|_| rng.gen_range(0..10)).collect();
    Dataset { name: DatasetName::Mnist, split: Split::Train, images, labels, image_shape: (28, dim / 28), num_classes: 10 }
}

pub fn random_pair(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let y: Vec<f64> = x.iter().map(|v| v + 0.3 * rng.gen::<f64>()).collect();
    (x, y)
}
