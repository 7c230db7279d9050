//! Parameter checkpoint files.
//!
//! ```text
//! magic    4 bytes "SDOW"
//! version  u32
//! count    u32
//! per parameter:
//!   name_len u32, name (utf-8)
//!   ndim u32, dims ndim x u32
//!   data     prod(dims) x f32
//! ```
//! All integers and floats little-endian.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ParamRef;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SDOW";
const VERSION: u32 = 1;

/// A parameter as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn save_checkpoint<P: AsRef<Path>>(path: P, params: &[ParamRef<'_, f32>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(p.shape.len() as u32).to_le_bytes())?;
        for &d in p.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in p.value {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Truncated("checkpoint".into())
        } else {
            Error::Io(e)
        }
    })?;
    Ok(u32::from_le_bytes(b))
}

pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<Vec<NamedTensor>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Truncated("checkpoint magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::VersionMismatch(format!("checkpoint magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::VersionMismatch(format!("checkpoint version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|_| Error::Truncated("checkpoint name".into()))?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let ndim = read_u32(&mut r)? as usize;
        let shape = (0..ndim)
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f32::from_bits(read_u32(&mut r)?));
        }
        out.push(NamedTensor { name, shape, data });
    }
    Ok(out)
}
