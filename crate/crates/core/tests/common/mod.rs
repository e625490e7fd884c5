#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};

use ads_core::harness::ExperimentConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn write_idx(dir: &Path, prefix: &str, images: &[Vec<u8>], labels: &[u8]) {
    let mut f = std::fs::File::create(dir.join(format!("{prefix}-images-idx3-ubyte"))).unwrap();
    for v in [0x803u32, images.len() as u32, 28, 28] {
        f.write_all(&v.to_be_bytes()).unwrap();
    }
    for im in images {
        f.write_all(im).unwrap();
    }
    let mut f = std::fs::File::create(dir.join(format!("{prefix}-labels-idx1-ubyte"))).unwrap();
    for v in [0x801u32, labels.len() as u32] {
        f.write_all(&v.to_be_bytes()).unwrap();
    }
    f.write_all(labels).unwrap();
}

/// Noisy class prototypes in the MNIST IDX layout under `<root>/<name>/`.
pub fn write_synthetic(root: &Path, name: &str, per_class_train: usize, per_class_test: usize, seed: u64) {
    let dir = root.join(name);
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let protos: Vec<Vec<f64>> = (0..10).map(|_| (0..784).map(|_| rng.gen_range(0.0..200.0)).collect()).collect();
    for (prefix, per_class) in [("train", per_class_train), ("t10k", per_class_test)] {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..per_class * 10 {
            let c = i % 10;
            images.push(protos[c].iter().map(|p| (p + rng.gen_range(-55.0..55.0)).clamp(0.0, 255.0) as u8).collect());
            labels.push(c as u8);
        }
        write_idx(&dir, prefix, &images, &labels);
    }
}

pub fn synthetic_root(dir: &Path) -> PathBuf {
    let root = dir.join("data");
    write_synthetic(&root, "mnist", 40, 15, 1);
    write_synthetic(&root, "fashion_mnist", 40, 15, 2);
    root
}

/// A 12-arch, 2-seed experiment over tiny widths that trains in seconds.
pub fn tiny_config(out: &Path, data_root: &Path, workers: usize) -> ExperimentConfig {
    let text = format!(
        r#"
out_dir = "{out}"
data_root = "{data}"
seeds = [0, 1]
workers = {workers}

[pool]
preset = "desk"
seed = 3
depths = [3, 5]
width_candidates = [8, 16]
counts = {{ uniform = 4, increasing = 2, decreasing = 2, bottleneck = 2, spindle = 2 }}

[train]
epochs = 2.0
batch_size = 32
lr = 0.01
trace_every = 2

[calibration]
fractions = [0.5, 1.0]
primary_fraction = 0.5
n_archs = 6
seeds = [0]

[stats]
n_perm = 999
n_boot = 1000

[[scenario]]
id = "m2f"
type = "transfer"
src = "mnist"
dst = "fashion_mnist"
eval_fraction = 0.5
calib_fraction = 0.1
"#,
        out = out.display(),
        data = data_root.display()
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

/// Every file under `reports/`, name → bytes.
pub fn report_bytes(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out.join("reports"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}
