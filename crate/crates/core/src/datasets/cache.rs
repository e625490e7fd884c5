//! `ADSD` cache of converted datasets, so CIFAR conversion (or any other
//! ingestion step) runs once.
//!
//! Layout (little-endian):
//!
//! | field        | type                 |
//! |--------------|----------------------|
//! | magic        | `b"ADSD"`            |
//! | version      | u32 (= 1)            |
//! | dataset      | u8                   |
//! | split        | u8                   |
//! | N            | u64                  |
//! | height/width | 2 × u32              |
//! | num_classes  | u32                  |
//! | labels       | N × u8               |
//! | pixels       | N·h·w × f64          |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{DataError, DataPool, Dataset, DatasetName, Split};
use crate::codec;

pub const MAGIC: &[u8; 4] = b"ADSD";
pub const VERSION: u32 = 1;

pub fn write<W: Write>(ds: &Dataset, mut w: W) -> Result<(), DataError> {
    w.write_all(MAGIC)?;
    codec::write_u32(&mut w, VERSION)?;
    w.write_all(&[ds.name.code(), (ds.split == Split::Test) as u8])?;
    codec::write_u64(&mut w, ds.len() as u64)?;
    codec::write_u32(&mut w, ds.image_shape.0 as u32)?;
    codec::write_u32(&mut w, ds.image_shape.1 as u32)?;
    codec::write_u32(&mut w, ds.num_classes as u32)?;
    let labels: Vec<u8> = ds.labels.iter().map(|&y| y as u8).collect();
    w.write_all(&labels)?;
    codec::write_f64s(&mut w, ds.images.iter().copied())?;
    w.flush()?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<Dataset, DataError> {
    let trunc = |e: std::io::Error| if codec::is_eof(&e) { DataError::Cache("truncated".into()) } else { DataError::Io(e) };
    let magic: [u8; 4] = codec::read_array(&mut r).map_err(trunc)?;
    if &magic != MAGIC {
        return Err(DataError::Cache(format!("bad magic {magic:?}")));
    }
    let version = codec::read_u32(&mut r).map_err(trunc)?;
    if version != VERSION {
        return Err(DataError::Cache(format!("unsupported version {version}")));
    }
    let [name, split] = codec::read_array::<_, 2>(&mut r).map_err(trunc)?;
    let name = DatasetName::from_code(name).ok_or_else(|| DataError::Cache(format!("unknown dataset code {name}")))?;
    let split = match split {
        0 => Split::Train,
        1 => Split::Test,
        s => return Err(DataError::Cache(format!("unknown split code {s}"))),
    };
    let n = codec::read_u64(&mut r).map_err(trunc)? as usize;
    let h = codec::read_u32(&mut r).map_err(trunc)? as usize;
    let w = codec::read_u32(&mut r).map_err(trunc)? as usize;
    let num_classes = codec::read_u32(&mut r).map_err(trunc)? as usize;
    let mut labels = vec![0u8; n];
    r.read_exact(&mut labels).map_err(trunc)?;
    let pixels = codec::read_f64s(&mut r, n * h * w).map_err(trunc)?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(DataError::Cache("trailing bytes".into()));
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    if let Some(&label) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(DataError::BadLabel { label });
    }
    let images = Array2::from_shape_vec((n, h * w), pixels).expect("length checked by read");
    Ok(Dataset { name, split, images, labels, image_shape: (h, w), num_classes })
}

pub fn save(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    write(ds, BufWriter::new(File::create(path)?))
}

pub fn load(path: &Path) -> Result<Dataset, DataError> {
    read(BufReader::new(File::open(path)?))
}

pub fn cache_path(dir: &Path, name: DatasetName, split: Split) -> PathBuf {
    dir.join(format!("{name}-{split}.adsd"))
}

impl DataPool {
    /// Like [`DataPool::load`], but reads from and fills the `ADSD` cache in `dir`.
    pub fn load_cached(&mut self, root: &Path, dir: &Path, name: DatasetName) -> Result<(), DataError> {
        let paths = [cache_path(dir, name, Split::Train), cache_path(dir, name, Split::Test)];
        if paths.iter().all(|p| p.exists()) {
            for p in &paths {
                self.insert(load(p)?);
            }
            return Ok(());
        }
        self.load(root, name)?;
        std::fs::create_dir_all(dir)?;
        for (p, split) in paths.iter().zip([Split::Train, Split::Test]) {
            save(self.get(name, split)?, p)?;
        }
        Ok(())
    }
}
