//! Parameter checkpoints.
//!
//! ```text
//! magic "CMPLCKPT" | version u32 | tensor count u32
//! per tensor: name length u32 | UTF-8 name | rows u32 | cols u32 | rows * cols f64
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::ParamStore;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CMPLCKPT";
const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn save_checkpoint(path: &Path, params: &ParamStore) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION as usize)?;
    put_u32(&mut w, params.names().len())?;
    for ((name, &(rows, cols)), values) in params.names().iter().zip(params.shapes()).zip(params.values()) {
        put_u32(&mut w, name.len())?;
        w.write_all(name.as_bytes())?;
        put_u32(&mut w, rows)?;
        put_u32(&mut w, cols)?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads parameter values. Gradient and momentum buffers start at zero.
pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{} is not a checkpoint", path.display())));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = get_u32(&mut r)?;
    let mut params = ParamStore::default();
    for _ in 0..count {
        let len = get_u32(&mut r)?;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("non-UTF-8 tensor name".into()))?;
        let rows = get_u32(&mut r)?;
        let cols = get_u32(&mut r)?;
        let mut values = Vec::with_capacity(rows * cols);
        let mut b = [0u8; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut b)?;
            values.push(f64::from_le_bytes(b));
        }
        params.insert(&name, rows, cols, values)?;
    }
    Ok(params)
}
