//! FPK1 matrix framing.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FPK1"
//! 4       4     reserved, must be zero
//! 8       8     rows, u64 little-endian
//! 16      8     cols, u64 little-endian
//! 24      4*r*c row-major f32 little-endian
//! ```

use std::fs;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FPK1";
pub const HEADER_LEN: usize = 24;

/// Shape information read from a matrix header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixHeader {
    pub rows: usize,
    pub cols: usize,
}

impl MatrixHeader {
    pub fn payload_len(&self) -> Option<usize> {
        self.rows.checked_mul(self.cols)?.checked_mul(4)
    }
}

pub fn encode_matrix(data: &Array2<f32>) -> Vec<u8> {
    let (rows, cols) = data.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[0u8; 4]);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    // iter() walks logical row-major order regardless of memory layout
    for v in data.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptMatrix {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn decode_header(bytes: &[u8], path: &Path) -> Result<MatrixHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(
            path,
            format!("file is {} bytes, shorter than the header", bytes.len()),
        ));
    }
    if bytes[0..4] != MAGIC {
        return Err(corrupt(path, "header magic mismatch"));
    }
    if bytes[4..8] != [0u8; 4] {
        return Err(corrupt(path, "reserved header bytes are not zero"));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let to_usize = |v: u64| usize::try_from(v).map_err(|_| corrupt(path, "shape overflows"));
    Ok(MatrixHeader {
        rows: to_usize(rows)?,
        cols: to_usize(cols)?,
    })
}

/// Decodes a full matrix file; the byte length must match the header exactly.
pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<Array2<f32>> {
    let header = decode_header(bytes, path)?;
    check_len(&header, bytes.len() as u64, path)?;
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((header.rows, header.cols), values)
        .map_err(|e| corrupt(path, e.to_string()))
}

fn check_len(header: &MatrixHeader, file_len: u64, path: &Path) -> Result<()> {
    let expected = header
        .payload_len()
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| corrupt(path, "shape overflows"))?;
    if file_len != expected as u64 {
        return Err(corrupt(
            path,
            format!(
                "expected {expected} bytes for {}x{} matrix, found {file_len}",
                header.rows, header.cols
            ),
        ));
    }
    Ok(())
}

/// Reads only the header and checks the file size against it.
pub fn read_header(path: &Path) -> Result<MatrixHeader> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut buf = Vec::with_capacity(HEADER_LEN);
    file.by_ref()
        .take(HEADER_LEN as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    let header = decode_header(&buf, path)?;
    check_len(&header, file_len, path)?;
    Ok(header)
}

pub fn read_matrix(path: &Path) -> Result<Array2<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, path)
}

pub fn write_matrix(path: &Path, data: &Array2<f32>) -> Result<()> {
    fs::write(path, encode_matrix(data)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn header_layout() {
        let m = array![[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let bytes = encode_matrix(&m);
        assert_eq!(bytes.len(), 24 + 6 * 4);
        assert_eq!(&bytes[0..4], b"FPK1");
        assert_eq!(&bytes[4..8], &[0, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &3u64.to_le_bytes());
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[44..48], &6.0f32.to_le_bytes());
    }

    #[test]
    fn transposed_view_is_written_in_logical_order() {
        let m = array![[1.0f32, 2.0], [3.0, 4.0]];
        let t = m.t().to_owned();
        let back = decode_matrix(&encode_matrix(&t), Path::new("x")).unwrap();
        assert_eq!(back, array![[1.0f32, 3.0], [2.0, 4.0]]);
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let m = array![[1.0f32, 2.0]];
        let mut bytes = encode_matrix(&m);
        bytes.pop();
        let err = decode_matrix(&bytes, Path::new("x.fpk")).unwrap_err();
        assert!(err.to_string().contains("corrupt matrix file"), "{err}");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode_matrix(&array![[0.0f32]]);
        bytes[3] = b'2';
        let err = decode_matrix(&bytes, Path::new("x.fpk")).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn nonzero_reserved_is_rejected() {
        let mut bytes = encode_matrix(&array![[0.0f32]]);
        bytes[5] = 1;
        assert!(decode_matrix(&bytes, Path::new("x.fpk")).is_err());
    }
}
