use std::path::PathBuf;

use ndarray::{Array2, ArrayView2};

use super::{DataError, Dataset, DatasetName, Split};

/// One label byte followed by 32×32 R, G and B planes.
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 1024;
const SRC: usize = 32;
const DST: usize = 28;

/// Reads CIFAR-10 binary batches, converting every image to luminance and
/// area-averaging it down to 28×28 so it shares the MNIST input dimension.
pub fn load_cifar10(paths: &[PathBuf], split: Split) -> Result<Dataset, DataError> {
    if paths.is_empty() {
        return Err(DataError::NoFiles);
    }
    let resize = area_weights(SRC, DST);
    let mut labels = Vec::new();
    let mut pixels: Vec<f64> = Vec::new();
    for path in paths {
        let bytes = std::fs::read(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
            return Err(DataError::RecordSize { path: path.clone(), size: bytes.len(), record: CIFAR_RECORD_BYTES });
        }
        for rec in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
            let label = rec[0] as usize;
            if label >= 10 {
                return Err(DataError::BadLabel { label });
            }
            labels.push(label);
            let gray = grayscale(&rec[1..]);
            let small = resize.dot(&gray).dot(&resize.t());
            pixels.extend(small.iter());
        }
    }
    let images = Array2::from_shape_vec((labels.len(), DST * DST), pixels).expect("record arithmetic");
    Ok(Dataset { name: DatasetName::Cifar10, split, images, labels, image_shape: (DST, DST), num_classes: 10 })
}

/// Luminance 0.299 R + 0.587 G + 0.114 B, scaled to [0, 1].
fn grayscale(planes: &[u8]) -> Array2<f64> {
    let (r, rest) = planes.split_at(1024);
    let (g, b) = rest.split_at(1024);
    Array2::from_shape_fn((SRC, SRC), |(i, j)| {
        let k = i * SRC + j;
        (0.299 * r[k] as f64 + 0.587 * g[k] as f64 + 0.114 * b[k] as f64) / 255.0
    })
}

/// Row-stochastic `dst × src` matrix: output pixel i averages the input
/// interval [i·s, (i+1)·s) with s = src/dst, weighted by overlap.
pub(crate) fn area_weights(src: usize, dst: usize) -> Array2<f64> {
    let scale = src as f64 / dst as f64;
    Array2::from_shape_fn((dst, src), |(i, j)| {
        let lo = i as f64 * scale;
        let hi = lo + scale;
        let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
        overlap / scale
    })
}

#[allow(dead_code)]
pub(crate) fn resize(img: ArrayView2<f64>, dst: usize) -> Array2<f64> {
    let w = area_weights(img.nrows(), dst);
    w.dot(&img).dot(&w.t())
}
