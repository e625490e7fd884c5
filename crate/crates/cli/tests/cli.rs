use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

fn adslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adslab")).args(args).env_remove("ADS_DATA_ROOT").env_remove("ADS_WORKERS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_idx(dir: &Path, prefix: &str, n_per_class: usize, offset: u8) {
    let n = n_per_class * 10;
    let mut f = std::fs::File::create(dir.join(format!("{prefix}-images-idx3-ubyte"))).unwrap();
    for v in [0x803u32, n as u32, 28, 28] {
        f.write_all(&v.to_be_bytes()).unwrap();
    }
    for i in 0..n {
        let c = i % 10;
        let img: Vec<u8> = (0..784).map(|k| (((k * 7 + c * 131 + i * 3) % 97) as u8).wrapping_add(offset).wrapping_add(if k % 10 == c { 120 } else { 0 })).collect();
        f.write_all(&img).unwrap();
    }
    let mut f = std::fs::File::create(dir.join(format!("{prefix}-labels-idx1-ubyte"))).unwrap();
    for v in [0x801u32, n as u32] {
        f.write_all(&v.to_be_bytes()).unwrap();
    }
    f.write_all(&(0..n).map(|i| (i % 10) as u8).collect::<Vec<_>>()).unwrap();
}

fn synthetic_data(root: &Path) {
    for (name, off) in [("mnist", 0u8), ("fashion_mnist", 40u8)] {
        let d = root.join(name);
        std::fs::create_dir_all(&d).unwrap();
        write_idx(&d, "train", 30, off);
        write_idx(&d, "t10k", 10, off);
    }
}

fn config(dir: &Path, counts: &str) -> std::path::PathBuf {
    let text = format!(
        r#"
out_dir = "{out}"
data_root = "{data}"
seeds = [0]

[pool]
depths = [3]
width_candidates = [8, 16]
counts = {{ {counts} }}

[train]
epochs = 1.0
batch_size = 32
lr = 0.01

[calibration]
fractions = [1.0]
primary_fraction = 1.0
n_archs = 4
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
calib_fraction = 0.2
"#,
        out = dir.join("run").display(),
        data = dir.join("data").display()
    );
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn help_and_usage_errors() {
    for sub in ["gen-pool", "calibrate", "run", "ads", "correlate", "select", "report"] {
        let o = adslab(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
    let o = adslab(&["run", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(adslab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(adslab(&[]).status.code(), Some(1));
}

#[test]
fn ads_prints_score_and_terms() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("p.toml");
    ads_core::CalibrationParams::manual(0.0, 0.0, 1.0, 0.0).save(&p).unwrap();
    let o = adslab(&["ads", "--widths", "4,4,4,10", "--params", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "ads 6\nterm 1 2\nterm 2 4\n");
    let o = adslab(&["ads", "--widths", "4,10", "--params", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_pool_then_run_uses_the_same_pool() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic_data(&tmp.path().join("data"));
    let cfg = config(tmp.path(), "uniform = 2, increasing = 2, bottleneck = 1, spindle = 1");
    let m1 = tmp.path().join("a.jsonl");
    let m2 = tmp.path().join("b.jsonl");
    for m in [&m1, &m2] {
        let o = adslab(&["gen-pool", "--config", cfg.to_str().unwrap(), "--out", m.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    let o = adslab(&["run", "--config", cfg.to_str().unwrap(), "--pool", m1.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("scenario,n_arch,spearman,kendall,dc,p_value,ci_low,ci_high\nm2f,6,"));
    assert_eq!(std::fs::read(tmp.path().join("run/m2f/pool.jsonl")).unwrap(), std::fs::read(&m1).unwrap());
    let dir = tmp.path().join("run");
    for sub in ["correlate", "select", "report"] {
        let o = adslab(&[sub, "--dir", dir.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{sub}: {}", stderr(&o));
    }
}

#[test]
fn correlate_on_two_archs_is_insufficient() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic_data(&tmp.path().join("data"));
    let cfg = config(tmp.path(), "uniform = 2");
    // the run itself records both archs but cannot report on them
    let o = adslab(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = adslab(&["correlate", "--dir", tmp.path().join("run").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("insufficient sample"), "{}", stderr(&o));
}

#[test]
fn missing_data_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "uniform = 2, increasing = 2");
    let o = adslab(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train-images-idx3-ubyte"));
}
