use std::path::Path;

use ndarray::Array2;

use super::{DataError, Dataset, DatasetName, Split};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn need(path: &Path, bytes: &[u8], expected: usize) -> Result<(), DataError> {
    if bytes.len() < expected {
        return Err(DataError::Truncated { path: path.to_path_buf(), expected, found: bytes.len() });
    }
    Ok(())
}

fn check_magic(path: &Path, bytes: &[u8], expected: u32) -> Result<(), DataError> {
    need(path, bytes, 4)?;
    let found = be_u32(bytes, 0);
    if found != expected {
        return Err(DataError::WrongMagic { path: path.to_path_buf(), expected, found });
    }
    Ok(())
}

/// Parses a big-endian IDX image/label pair. Pixels are scaled to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path, name: DatasetName, split: Split) -> Result<Dataset, DataError> {
    let img = std::fs::read(images_path)?;
    let lab = std::fs::read(labels_path)?;

    check_magic(images_path, &img, IMAGE_MAGIC)?;
    need(images_path, &img, 16)?;
    let n_img = be_u32(&img, 4) as usize;
    let rows = be_u32(&img, 8) as usize;
    let cols = be_u32(&img, 12) as usize;
    let pixels = rows * cols;
    need(images_path, &img, 16 + n_img * pixels)?;

    check_magic(labels_path, &lab, LABEL_MAGIC)?;
    need(labels_path, &lab, 8)?;
    let n_lab = be_u32(&lab, 4) as usize;
    need(labels_path, &lab, 8 + n_lab)?;

    if n_img != n_lab {
        return Err(DataError::CountMismatch { images: n_img, labels: n_lab });
    }
    let labels: Vec<usize> = lab[8..8 + n_lab].iter().map(|&b| b as usize).collect();
    if let Some(&label) = labels.iter().find(|&&y| y >= 10) {
        return Err(DataError::BadLabel { label });
    }
    let images = Array2::from_shape_vec((n_img, pixels), img[16..16 + n_img * pixels].iter().map(|&p| p as f64 / 255.0).collect())
        .expect("length checked");
    Ok(Dataset { name, split, images, labels, image_shape: (rows, cols), num_classes: 10 })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::io::Write;

    pub(crate) fn write_idx_pair(dir: &Path, images: &[Vec<u8>], labels: &[u8], side: usize) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("images-idx3-ubyte");
        let lp = dir.join("labels-idx1-ubyte");
        let mut f = std::fs::File::create(&ip).unwrap();
        for v in [IMAGE_MAGIC, images.len() as u32, side as u32, side as u32] {
            f.write_all(&v.to_be_bytes()).unwrap();
        }
        for im in images {
            f.write_all(im).unwrap();
        }
        let mut f = std::fs::File::create(&lp).unwrap();
        for v in [LABEL_MAGIC, labels.len() as u32] {
            f.write_all(&v.to_be_bytes()).unwrap();
        }
        f.write_all(labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn parses_small_pair() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), &[vec![0, 255, 51, 102], vec![255; 4]], &[3, 7], 2);
        let ds = load_idx(&ip, &lp, DatasetName::Mnist, Split::Train).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.labels, vec![3, 7]);
        assert_eq!(ds.images[[0, 1]], 1.0);
        assert!((ds.images[[0, 2]] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn swapped_files_are_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), &[vec![0; 4]], &[1], 2);
        let err = load_idx(&ip, &ip, DatasetName::Mnist, Split::Train).unwrap_err();
        assert!(matches!(err, DataError::WrongMagic { expected: LABEL_MAGIC, found: IMAGE_MAGIC, .. }));
        let err = load_idx(&lp, &lp, DatasetName::Mnist, Split::Train).unwrap_err();
        assert!(matches!(err, DataError::WrongMagic { expected: IMAGE_MAGIC, .. }));
    }

    #[test]
    fn truncated_payload_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), &[vec![0; 4], vec![1; 4]], &[1, 2], 2);
        let bytes = std::fs::read(&ip).unwrap();
        std::fs::write(&ip, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(load_idx(&ip, &lp, DatasetName::Mnist, Split::Train), Err(DataError::Truncated { .. })));
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, _) = write_idx_pair(dir.path(), &[vec![0; 4], vec![1; 4]], &[1, 2], 2);
        let sub = dir.path().join("other");
        std::fs::create_dir(&sub).unwrap();
        let (_, lp) = write_idx_pair(&sub, &[vec![0; 4]], &[1], 2);
        assert!(matches!(load_idx(&ip, &lp, DatasetName::Mnist, Split::Train), Err(DataError::CountMismatch { images: 2, labels: 1 })));
    }
}
