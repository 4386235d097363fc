//! Reader for the IDX container format used by the MNIST distribution.
//!
//! Layout: two zero bytes, a type code, a dimension count, then one
//! big-endian u32 per dimension, then the data in row-major order. Only the
//! unsigned-byte type code (0x08) is supported here.

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

const TYPE_UNSIGNED_BYTE: u8 = 0x08;

/// A parsed IDX tensor of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxData {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxData {
    /// Number of leading-dimension items (images, labels, ...).
    pub fn items(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    /// Element count per item.
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }

    /// The bytes of item `i`.
    pub fn item(&self, i: usize) -> &[u8] {
        let len = self.item_len();
        &self.data[i * len..(i + 1) * len]
    }
}

fn parse_error(path: &Path, offset: u64, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.display().to_string(),
        offset,
        message: message.into(),
    }
}

/// Parse an IDX byte buffer; `path` is used only for error reporting.
pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxData> {
    if bytes.len() < 4 {
        return Err(parse_error(
            path,
            bytes.len() as u64,
            format!("truncated magic: need 4 bytes, have {}", bytes.len()),
        ));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(parse_error(
            path,
            0,
            format!(
                "bad magic: expected leading bytes 00 00, got {:02x} {:02x}",
                bytes[0], bytes[1]
            ),
        ));
    }
    if bytes[2] != TYPE_UNSIGNED_BYTE {
        return Err(parse_error(
            path,
            2,
            format!(
                "unsupported type code {:#04x}, expected {TYPE_UNSIGNED_BYTE:#04x} (unsigned byte)",
                bytes[2]
            ),
        ));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(parse_error(path, 3, "dimension count is zero"));
    }
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(parse_error(
            path,
            bytes.len() as u64,
            format!("truncated header: need {header_len} bytes for {ndims} dimensions"),
        ));
    }
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        let off = 4 + 4 * d;
        let dim = u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        dims.push(dim);
    }
    let expected: usize = dims.iter().product();
    let actual = bytes.len() - header_len;
    if actual != expected {
        return Err(parse_error(
            path,
            header_len as u64,
            format!("payload holds {actual} bytes but dimensions {dims:?} require {expected}"),
        ));
    }
    Ok(IdxData {
        dims,
        data: bytes[header_len..].to_vec(),
    })
}

/// Read and parse an IDX file.
pub fn load_idx(path: &Path) -> Result<IdxData> {
    let bytes = fs::read(path)?;
    parse_idx(&bytes, path)
}

/// Serialize to IDX bytes (used by tests and the synthetic generators).
pub fn to_idx_bytes(dims: &[usize], data: &[u8]) -> Result<Vec<u8>> {
    if dims.is_empty() || dims.len() > 255 {
        return Err(CliError::validation("IDX supports 1..=255 dimensions"));
    }
    if dims.iter().product::<usize>() != data.len() {
        return Err(CliError::validation("IDX dimensions do not match payload size"));
    }
    let mut out = vec![0u8, 0, TYPE_UNSIGNED_BYTE, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    Ok(out)
}
