//! Grid serialization and atomic file output.

use num_complex::Complex64;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, WeylError};
use crate::eval::GridSpec;

pub const GRID_MAGIC: &[u8; 5] = b"WEYL1";

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| WeylError::Io(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// CSV with columns `index,node,re,im,modulus`.
pub fn grid_csv(grid: &GridSpec, values: &[Complex64]) -> String {
    let mut out = String::from("index,node,re,im,modulus\n");
    for (j, v) in values.iter().enumerate() {
        out.push_str(&format!("{j},{:e},{:e},{:e},{:e}\n", grid.node(j), v.re, v.im, v.norm()));
    }
    out
}

/// A grid as stored in the binary layout.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryGrid {
    pub n: u64,
    pub size: u64,
    /// The coordinate held fixed: `t` for an x-grid, `x` for a t-grid.
    pub fixed: f64,
    pub values: Vec<Complex64>,
}

/// Little-endian layout: magic `WEYL1`, `N: u64`, `size: u64`, `fixed: f64`,
/// then `(re, im)` pairs of `f64`.
pub fn encode_grid(grid: &BinaryGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(29 + 16 * grid.values.len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&grid.n.to_le_bytes());
    out.extend_from_slice(&grid.size.to_le_bytes());
    out.extend_from_slice(&grid.fixed.to_le_bytes());
    for v in &grid.values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<BinaryGrid> {
    if bytes.len() < 29 || &bytes[..5] != GRID_MAGIC {
        return Err(WeylError::Format("missing WEYL1 header".into()));
    }
    let word = |at: usize| -> [u8; 8] { bytes[at..at + 8].try_into().expect("8-byte slice") };
    let n = u64::from_le_bytes(word(5));
    let size = u64::from_le_bytes(word(13));
    let fixed = f64::from_le_bytes(word(21));
    let body = &bytes[29..];
    if body.len() % 16 != 0 || (body.len() / 16) as u64 != size {
        return Err(WeylError::Format(format!(
            "payload holds {} bytes, expected {} values",
            body.len(),
            size
        )));
    }
    let values = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Ok(BinaryGrid {
        n,
        size,
        fixed,
        values,
    })
}
