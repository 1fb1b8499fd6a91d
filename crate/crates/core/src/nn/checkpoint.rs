//! Versioned binary checkpoint of named f64 tensors.
//!
//! Layout (all integers little endian):
//!
//! ```text
//! magic  b"MGNT"
//! u32    format version (currently 1)
//! u32    tensor count
//! per tensor:
//!   u32            name length, then that many UTF-8 bytes
//!   u32            rank, then rank u64 dimensions
//!   f64 * prod(dims)   data, raw IEEE-754 bits
//! ```
//!
//! `load(save(x))` reproduces `x` bit-exactly because values travel as raw
//! bit patterns.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

const MAGIC: &[u8; 4] = b"MGNT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorEntry {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Self {
        let entry = TensorEntry { name: name.into(), dims, data };
        assert_eq!(entry.dims.iter().product::<usize>(), entry.data.len(), "dims must match data");
        entry
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(&'static str),
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
    #[error("tensor {name} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_checkpoint<W: Write>(mut w: W, entries: &[TensorEntry]) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for entry in entries {
        w.write_all(&(entry.name.len() as u32).to_le_bytes())?;
        w.write_all(entry.name.as_bytes())?;
        w.write_all(&(entry.dims.len() as u32).to_le_bytes())?;
        for &d in &entry.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &entry.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<TensorEntry>, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = read_u32(&mut r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 1 << 16 {
            return Err(CheckpointError::Corrupt("implausible tensor name length"));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::Corrupt("tensor name is not UTF-8"))?;
        let rank = read_u32(&mut r)? as usize;
        if rank > 8 {
            return Err(CheckpointError::Corrupt("implausible tensor rank"));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            dims.push(u64::from_le_bytes(buf) as usize);
        }
        let len: usize = dims.iter().product();
        if len > 1 << 28 {
            return Err(CheckpointError::Corrupt("implausible tensor size"));
        }
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        entries.push(TensorEntry { name, dims, data });
    }
    Ok(entries)
}

pub fn save_checkpoint(path: impl AsRef<Path>, entries: &[TensorEntry]) -> io::Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), entries)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<TensorEntry>, CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
