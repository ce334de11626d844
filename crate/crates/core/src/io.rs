//! Flat little-endian binary arrays with a JSON header, for debugging dumps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random_fields::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub kind: String,
    /// `[rows, cols]`, row-major.
    pub shape: [usize; 2],
    /// Grid steps along rows and columns.
    pub steps: [f64; 2],
    /// Coordinate of the first row and column.
    pub origin: [f64; 2],
    pub dtype: String,
    pub seed: Option<RngStream>,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` (binary) and `path` with a `.json` extension (header).
pub fn write_array(path: &Path, data: &Array2<f64>, mut header: ArrayHeader) -> Result<()> {
    let (r, c) = data.dim();
    header.shape = [r, c];
    header.dtype = "f64le".into();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut bytes = Vec::with_capacity(r * c * 8);
    for v in data.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&bytes)?;
    fs::write(sidecar(path), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_array(path: &Path) -> Result<(Array2<f64>, ArrayHeader)> {
    let header: ArrayHeader = serde_json::from_str(&fs::read_to_string(sidecar(path))?)?;
    if header.dtype != "f64le" {
        return Err(Error::Format(format!("unsupported dtype {}", header.dtype)));
    }
    let bytes = fs::read(path)?;
    let [r, c] = header.shape;
    if bytes.len() != r * c * 8 {
        return Err(Error::Format(format!(
            "{} holds {} bytes, header expects {}",
            path.display(),
            bytes.len(),
            r * c * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    let arr = Array2::from_shape_vec((r, c), values).map_err(|e| Error::Format(e.to_string()))?;
    Ok((arr, header))
}

/// Writes a header line and one comma-separated line per row. Floats use the
/// shortest representation that round-trips.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Format(format!("row has {} fields, header {}", row.len(), header.len())));
        }
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), n + 2)))?;
        if row.len() != header.len() {
            return Err(Error::Format(format!("{} line {}: wrong field count", path.display(), n + 2)));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// `curve.csv` -> `curve.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    sidecar(path)
}
