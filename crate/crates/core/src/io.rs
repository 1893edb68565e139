//! Binary instance container.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! offset  size        field
//! 0       8           magic b"LSQOPTI\0"
//! 8       4   u32     format version (1)
//! 12      4   u32     flags, bit 0 = consistent
//! 16      8   u64     n (rows)
//! 24      8   u64     d (columns)
//! 32      4   u32     label length L, then L bytes of UTF-8
//! ..      4   u32     metadata length M, then M bytes of UTF-8 `key=value` lines
//! ..      8·n·d f64   A, row-major
//! ..      8·n   f64   b
//! ..      8·d   f64   x*
//! ..      8·n   f64   r* = A x* − b
//! ```
//!
//! The spectral summary is recomputed on load; it is a deterministic function of `A`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::problem::LlspInstance;

pub const MAGIC: &[u8; 8] = b"LSQOPTI\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_instance<W: Write>(inst: &LlspInstance, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(inst.is_consistent as u32).to_le_bytes())?;
    w.write_all(&(inst.n() as u64).to_le_bytes())?;
    w.write_all(&(inst.d() as u64).to_le_bytes())?;
    write_str(&mut w, &inst.label)?;
    let meta: String = inst.metadata.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    write_str(&mut w, &meta)?;
    for block in [inst.a.data(), &inst.b, &inst.x_star, &inst.r_star] {
        write_f64s(&mut w, block)?;
    }
    w.flush()
}

pub fn read_instance<R: Read>(mut r: R) -> Result<LlspInstance> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let flags = read_u32(&mut r)?;
    let n = read_u64(&mut r)? as usize;
    let d = read_u64(&mut r)? as usize;
    let label = read_str(&mut r)?;
    let meta = read_str(&mut r)?;
    let nd = n
        .checked_mul(d)
        .ok_or_else(|| Error::Format(format!("dimensions {n}x{d} overflow")))?;
    let a = read_f64s(&mut r, nd)?;
    let b = read_f64s(&mut r, n)?;
    let x_star = read_f64s(&mut r, d)?;
    let r_star = read_f64s(&mut r, n)?;
    let a = DenseMatrix::new(n, d, a)?;
    let spectral = linalg::spectral_summary(&a)?;
    let metadata = meta
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    Ok(LlspInstance {
        a,
        b,
        x_star,
        r_star,
        spectral,
        is_consistent: flags & 1 == 1,
        label,
        metadata,
    })
}

pub fn save_instance(inst: &LlspInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_instance(inst, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<LlspInstance> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_instance(std::io::BufReader::new(file))
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated instance: {e}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("string field is not UTF-8".into()))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let bytes = count
        .checked_mul(8)
        .ok_or_else(|| Error::Format("block size overflows".into()))?;
    let mut buf = Vec::new();
    r.by_ref()
        .take(bytes as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::Format(format!("truncated instance: {e}")))?;
    if buf.len() != bytes {
        return Err(Error::Format(format!(
            "truncated instance: expected {bytes} bytes, found {}",
            buf.len()
        )));
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}
