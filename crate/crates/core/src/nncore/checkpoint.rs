//! `ADSN` network checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | field     | type            |
//! |-----------|-----------------|
//! | magic     | `b"ADSN"`       |
//! | version   | u32 (= 1)       |
//! | depth L   | u32             |
//! | widths    | (L + 2) × u32   |
//! | topology  | u8              |
//! | weights   | f64, row-major, layer 1 … L+1 |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{ArchitectureSpec, DenseNet, NetError, TopologyTag};
use crate::codec;

pub const MAGIC: &[u8; 4] = b"ADSN";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(net: &DenseNet, mut w: W) -> Result<(), NetError> {
    let spec = net.spec();
    w.write_all(MAGIC)?;
    codec::write_u32(&mut w, VERSION)?;
    codec::write_u32(&mut w, spec.depth as u32)?;
    for &width in &spec.widths {
        codec::write_u32(&mut w, width as u32)?;
    }
    w.write_all(&[spec.topology.code()])?;
    for m in net.weights() {
        codec::write_f64s(&mut w, m.iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<DenseNet, NetError> {
    let trunc = |e: std::io::Error| if codec::is_eof(&e) { NetError::TruncatedCheckpoint } else { NetError::Io(e) };
    let magic: [u8; 4] = codec::read_array(&mut r).map_err(trunc)?;
    if &magic != MAGIC {
        return Err(NetError::BadMagic { found: magic });
    }
    let version = codec::read_u32(&mut r).map_err(trunc)?;
    if version != VERSION {
        return Err(NetError::UnsupportedVersion(version));
    }
    let depth = codec::read_u32(&mut r).map_err(trunc)? as usize;
    let mut widths = Vec::with_capacity(depth + 2);
    for _ in 0..depth + 2 {
        widths.push(codec::read_u32(&mut r).map_err(trunc)? as usize);
    }
    let [code] = codec::read_array::<_, 1>(&mut r).map_err(trunc)?;
    let topology = TopologyTag::from_code(code).ok_or(NetError::CorruptCheckpoint("unknown topology code"))?;
    let spec = ArchitectureSpec { depth, widths, topology };
    let diags = spec.diagnostics();
    if !diags.is_empty() {
        return Err(NetError::InvalidSpec(diags));
    }
    let mut weights = Vec::with_capacity(spec.num_layers());
    for l in 1..=spec.num_layers() {
        let shape = spec.layer_shape(l);
        let vals = codec::read_f64s(&mut r, shape.0 * shape.1).map_err(trunc)?;
        weights.push(Array2::from_shape_vec(shape, vals).expect("length checked by read"));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(NetError::CorruptCheckpoint("trailing bytes after weights"));
    }
    DenseNet::from_weights(spec, weights)
}

pub fn save(net: &DenseNet, path: &Path) -> Result<(), NetError> {
    write_checkpoint(net, BufWriter::new(File::create(path)?))
}

pub fn load(path: &Path) -> Result<DenseNet, NetError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
