//! Binary checkpoints and CSV tables. Every file is written to a temporary
//! sibling and renamed into place.
//!
//! Checkpoint layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `NLSSCAT1` |
//! | 4     | version `u32` |
//! | 8     | `n_points` `u64` |
//! | 8     | `half_length` `f64` |
//! | 8     | `time` `f64` |
//! | 4     | `lambda` `i32` |
//! | 8     | `epsilon` `f64` |
//! | 16 n  | interleaved `(re, im)` `f64` |

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{self, ComplexField};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"NLSSCAT1";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckpointHeader {
    pub n_points: u64,
    pub half_length: f64,
    pub time: f64,
    pub lambda: i32,
    pub epsilon: f64,
}

pub fn encode_checkpoint(u: &ComplexField, lambda: i32, epsilon: f64) -> Vec<u8> {
    let n = u.values.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * n);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&u.grid.half_length().to_le_bytes());
    out.extend_from_slice(&u.time.to_le_bytes());
    out.extend_from_slice(&lambda.to_le_bytes());
    out.extend_from_slice(&epsilon.to_le_bytes());
    for z in &u.values {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

fn take<const N: usize>(bytes: &[u8], at: usize) -> [u8; N] {
    bytes[at..at + N].try_into().expect("length checked by caller")
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(CheckpointHeader, ComplexField)> {
    let fail = |reason: String| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fail(format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len())));
    }
    if bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fail(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..8]),
            "NLSSCAT1"
        )));
    }
    let version = u32::from_le_bytes(take(bytes, 8));
    if version != CHECKPOINT_VERSION {
        return Err(fail(format!("version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let header = CheckpointHeader {
        n_points: u64::from_le_bytes(take(bytes, 12)),
        half_length: f64::from_le_bytes(take(bytes, 20)),
        time: f64::from_le_bytes(take(bytes, 28)),
        lambda: i32::from_le_bytes(take(bytes, 36)),
        epsilon: f64::from_le_bytes(take(bytes, 40)),
    };
    let n = header.n_points as usize;
    let expected = HEADER_LEN + 16 * n;
    if bytes.len() != expected {
        return Err(fail(format!(
            "payload holds {} bytes, header promises {}",
            bytes.len() - HEADER_LEN,
            16 * n
        )));
    }
    let grid = grid::make_grid(header.half_length, n)?;
    let values = (0..n)
        .map(|k| {
            let at = HEADER_LEN + 16 * k;
            Complex64::new(f64::from_le_bytes(take(bytes, at)), f64::from_le_bytes(take(bytes, at + 8)))
        })
        .collect();
    Ok((header, ComplexField::new(grid, header.time, values)?))
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_write(path: &Path, u: &ComplexField, lambda: i32, epsilon: f64) -> Result<()> {
    write_atomic(path, &encode_checkpoint(u, lambda, epsilon))
}

pub fn checkpoint_read(path: &Path) -> Result<(CheckpointHeader, ComplexField)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

/// Serialise `rows` as CSV with a header line. Floats use the shortest
/// representation that round-trips exactly.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
}

/// CSV for rows that have no derived header: `header` then `rows`.
pub fn csv_table(header: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| format!("{x:?}")))?;
    }
    w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Checkpoint {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    })?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Fail with every name in `names` that is absent from `dir`.
pub fn require(dir: &Path, names: &[String]) -> Result<()> {
    let missing: Vec<String> = names.iter().filter(|n| !dir.join(n).is_file()).cloned().collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingArtifacts {
            dir: dir.to_path_buf(),
            missing,
        })
    }
}
