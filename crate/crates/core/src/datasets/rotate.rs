use ndarray::{Array2, ArrayView1, Axis};

use super::{DataError, Dataset};

/// Rotates every image about its center by `angle_deg` with bilinear
/// interpolation; samples falling outside the source read as 0.
pub fn rotate_images(ds: &Dataset, angle_deg: f64) -> Result<Dataset, DataError> {
    let (h, w) = ds.image_shape;
    if h != w {
        return Err(DataError::NotSquare(h, w));
    }
    let side = h;
    let theta = angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let c = (side as f64 - 1.0) / 2.0;

    // source coordinate and bilinear weights per output pixel, shared by all images
    let taps: Vec<[(usize, f64); 4]> = (0..side * side)
        .map(|k| {
            let (r, col) = ((k / side) as f64, (k % side) as f64);
            let (dx, dy) = (col - c, r - c);
            let sx = cos * dx + sin * dy + c;
            let sy = -sin * dx + cos * dy + c;
            bilinear_taps(sx, sy, side)
        })
        .collect();

    let mut images = Array2::zeros(ds.images.raw_dim());
    for (src, mut dst) in ds.images.axis_iter(Axis(0)).zip(images.axis_iter_mut(Axis(0))) {
        for (out, tap) in dst.iter_mut().zip(&taps) {
            *out = sample(&src, tap);
        }
    }
    Ok(Dataset { images, ..ds.clone() })
}

/// Four (index, weight) pairs; out-of-range neighbours get weight 0.
fn bilinear_taps(x: f64, y: f64, side: usize) -> [(usize, f64); 4] {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let mut taps = [(0usize, 0.0f64); 4];
    let corners = [(x0, y0, (1.0 - fx) * (1.0 - fy)), (x0 + 1.0, y0, fx * (1.0 - fy)), (x0, y0 + 1.0, (1.0 - fx) * fy), (x0 + 1.0, y0 + 1.0, fx * fy)];
    for (slot, (cx, cy, wt)) in taps.iter_mut().zip(corners) {
        if cx >= 0.0 && cy >= 0.0 && (cx as usize) < side && (cy as usize) < side && wt != 0.0 {
            *slot = (cy as usize * side + cx as usize, wt);
        }
    }
    taps
}

fn sample(src: &ArrayView1<f64>, taps: &[(usize, f64); 4]) -> f64 {
    let mut v = 0.0;
    for &(i, wt) in taps {
        if wt != 0.0 {
            v += wt * src[i];
        }
    }
    v
}
