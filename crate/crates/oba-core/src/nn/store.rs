//! OBAWT001 parameter files: 8-byte ASCII magic, u32-LE entry count, then per
//! entry a u16-LE name length + UTF-8 name, u8 rank, rank×u32-LE dims and
//! product(dims) float64-LE values. Writing the same map twice is
//! byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"OBAWT001";

pub fn write_tensor_map(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    if entries.len() > u32::MAX as usize {
        return Err(ObaError::InvalidArg("too many tensor entries".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, tensor) in entries {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(ObaError::InvalidArg(format!(
                "tensor name too long: {name}"
            )));
        }
        if tensor.rank() > u8::MAX as usize {
            return Err(ObaError::InvalidArg(format!(
                "tensor rank too high: {name}"
            )));
        }
        w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&[tensor.rank() as u8])?;
        for &d in tensor.shape() {
            if d > u32::MAX as usize {
                return Err(ObaError::InvalidArg(format!("dim too large in {name}")));
            }
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor_map(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(ObaError::Format(format!(
            "bad magic {:?}, expected OBAWT001",
            String::from_utf8_lossy(&magic)
        )));
    }
    let count = read_u32(&mut r, "entry count")? as usize;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let name_len = read_u16(&mut r, "name length")? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, "name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| ObaError::Format(format!("entry {i}: name is not UTF-8")))?;
        let mut rank = [0u8; 1];
        read_exact(&mut r, &mut rank, "rank")?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            shape.push(read_u32(&mut r, "dim")? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            read_exact(&mut r, &mut buf, "values")?;
            data.push(f64::from_le_bytes(buf));
        }
        entries.push((name, Tensor::from_vec(&shape, data)?));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(ObaError::Format("trailing bytes after last entry".into()));
    }
    Ok(entries)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| ObaError::Format(format!("truncated file while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u16(r: &mut impl Read, what: &str) -> Result<u16> {
    let mut buf = [0u8; 2];
    read_exact(r, &mut buf, what)?;
    Ok(u16::from_le_bytes(buf))
}
