//! Minimal `.npy` reader/writer for little-endian float cubes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::array::Array3;
use crate::error::{Error, Result};

const MAGIC: &[u8] = b"\x93NUMPY";

/// Writes `a` as `<f4`, C order, shape `(channels, rows, cols)`.
pub fn write_f32(path: &Path, a: &Array3) -> Result<()> {
    let (c, h, w) = a.shape();
    let mut header =
        format!("{{'descr': '<f4', 'fortran_order': False, 'shape': ({c}, {h}, {w}), }}");
    let unpadded = MAGIC.len() + 4 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');
    let mut f = fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&[1, 0])?;
    f.write_all(&(header.len() as u16).to_le_bytes())?;
    f.write_all(header.as_bytes())?;
    f.write_all(&a.to_f32_le_bytes())?;
    Ok(())
}

fn bad(path: &Path, msg: &str) -> Error {
    Error::Ingestion(format!("{}: {msg}", path.display()))
}

/// Reads a 3-D `<f4` or `<f8` array.
pub fn read(path: &Path) -> Result<Array3> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(bad(path, "not an npy file"));
    }
    let (hlen, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => (
            u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
            12,
        ),
        _ => return Err(bad(path, "unsupported npy version")),
    };
    let header = std::str::from_utf8(&bytes[start..start + hlen])
        .map_err(|_| bad(path, "header is not text"))?;
    let width = if header.contains("'<f4'") {
        4
    } else if header.contains("'<f8'") {
        8
    } else {
        return Err(bad(path, "dtype must be <f4 or <f8"));
    };
    if header.contains("'fortran_order': True") {
        return Err(bad(path, "fortran order is not supported"));
    }
    let open = header.find("'shape': (").ok_or_else(|| bad(path, "missing shape"))? + 10;
    let close = open + header[open..].find(')').ok_or_else(|| bad(path, "bad shape"))?;
    let dims: Vec<usize> = header[open..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad(path, "bad shape entry")))
        .collect::<Result<_>>()?;
    let (c, h, w) = match dims[..] {
        [c, h, w] => (c, h, w),
        [h, w] => (1, h, w),
        _ => return Err(bad(path, "expected a 2-D or 3-D array")),
    };
    let body = &bytes[start + hlen..];
    if body.len() != c * h * w * width {
        return Err(bad(path, "payload size does not match shape"));
    }
    let data: Vec<f64> = if width == 4 {
        body.chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect()
    } else {
        body.chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect()
    };
    Array3::from_vec(c, h, w, data)
}
