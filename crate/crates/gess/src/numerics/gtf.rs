//! GTF tensor file format, little-endian:
//! bytes 0-3 magic "GTF1"; byte 4 dtype code 0x01 (f32); byte 5 ndim (1-4);
//! then ndim u32 extents; then product(extents) f32 row-major payload.
//! No trailing bytes are permitted.

use super::Tensor;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"GTF1";
pub const DTYPE_F32: u8 = 0x01;

#[derive(Debug, Error)]
pub enum GtfError {
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported dtype code {0:#04x} (only f32 = 0x01)")]
    BadDtype(u8),
    #[error("ndim {0} out of range 1-4")]
    BadNdim(u8),
    #[error("zero extent at axis {0}")]
    ZeroExtent(usize),
    #[error("dim product overflows: {0:?}")]
    DimOverflow(Vec<u32>),
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("trailing bytes after payload")]
    TrailingBytes,
    #[error("tensor not representable in GTF: {0}")]
    Unrepresentable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_bytes(t: &Tensor) -> Result<Vec<u8>, GtfError> {
    if t.ndim() > 4 {
        return Err(GtfError::Unrepresentable(format!(
            "ndim {} exceeds 4",
            t.ndim()
        )));
    }
    for &d in t.dims() {
        if d > u32::MAX as usize {
            return Err(GtfError::Unrepresentable(format!("extent {d} exceeds u32")));
        }
    }
    let mut out = Vec::with_capacity(6 + 4 * t.ndim() + 4 * t.len());
    out.extend_from_slice(&MAGIC);
    out.push(DTYPE_F32);
    out.push(t.ndim() as u8);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn read_bytes(bytes: &[u8]) -> Result<Tensor, GtfError> {
    if bytes.len() < 6 {
        return Err(GtfError::Truncated {
            expected: 6,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(GtfError::BadMagic(magic));
    }
    if bytes[4] != DTYPE_F32 {
        return Err(GtfError::BadDtype(bytes[4]));
    }
    let ndim = bytes[5];
    if ndim == 0 || ndim > 4 {
        return Err(GtfError::BadNdim(ndim));
    }
    let header = 6 + 4 * ndim as usize;
    if bytes.len() < header {
        return Err(GtfError::Truncated {
            expected: header,
            actual: bytes.len(),
        });
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    let mut raw_dims = Vec::with_capacity(ndim as usize);
    let mut count: u64 = 1;
    for ax in 0..ndim as usize {
        let off = 6 + 4 * ax;
        let d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        raw_dims.push(d);
        if d == 0 {
            return Err(GtfError::ZeroExtent(ax));
        }
        count = count
            .checked_mul(d as u64)
            .ok_or_else(|| GtfError::DimOverflow(raw_dims.clone()))?;
        dims.push(d as usize);
    }
    let payload = count
        .checked_mul(4)
        .filter(|&b| b <= usize::MAX as u64 - header as u64)
        .ok_or_else(|| GtfError::DimOverflow(raw_dims.clone()))? as usize;
    let expected = header + payload;
    if bytes.len() < expected {
        return Err(GtfError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(GtfError::TrailingBytes);
    }
    let mut data = Vec::with_capacity(count as usize);
    for i in 0..count as usize {
        let off = header + 4 * i;
        data.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64);
    }
    Ok(Tensor::new(dims, data).expect("validated dims"))
}

pub fn write(t: &Tensor, path: impl AsRef<Path>) -> Result<(), GtfError> {
    let bytes = write_bytes(t)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Tensor, GtfError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    read_bytes(&bytes)
}
