//! `ALRM` binary matrices: a 24-byte header (magic, `u32` version, `u64`
//! rows, `u64` cols, all little-endian) followed by the column-major `f64`
//! payload.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

pub const MAGIC: [u8; 4] = *b"ALRM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

pub fn encode(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses an encoded matrix; the error string names the first defect found.
pub fn decode(bytes: &[u8]) -> Result<DMatrix<f64>, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    if bytes[..4] != MAGIC {
        return Err("bad magic".into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| format!("dimensions {rows}x{cols} overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(format!("payload is {} bytes, header implies {expected}", payload.len()));
    }
    let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DMatrix::from_vec(rows as usize, cols as usize, data))
}

pub fn write(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    fs::write(path, encode(m)).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> CliResult<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|reason| CliError::corrupt(path, reason))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = DMatrix::from_fn(3, 4, |i, j| (i as f64 - 1.3 * j as f64).exp() * 1e-300_f64.max(1.0 / 3.0));
        let mut m = m;
        m[(0, 0)] = -0.0;
        m[(2, 3)] = f64::MIN_POSITIVE / 7.0;
        let back = decode(&encode(&m)).unwrap();
        assert_eq!(back.shape(), (3, 4));
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_layout() {
        let m = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let bytes = encode(&m);
        assert_eq!(&bytes[..4], b"ALRM");
        assert_eq!(bytes.len(), 24 + 16);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 1.0);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode(&DMatrix::from_element(2, 2, 1.5));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).unwrap_err().contains("magic"));
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(&bytes[..10]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode(&long).is_err());
        let mut ver = bytes;
        ver[4] = 9;
        assert!(decode(&ver).unwrap_err().contains("version"));
    }

    #[test]
    fn empty_matrix() {
        let m = DMatrix::<f64>::zeros(0, 5);
        assert_eq!(decode(&encode(&m)).unwrap().shape(), (0, 5));
    }
}
