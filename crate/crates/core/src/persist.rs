//! Datasets on disk.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic | 8 bytes `LCDATA\0\0` |
//! | version | u32 |
//! | dtype | u8, `1` = f64 |
//! | ndim, shape | u32, then `ndim` x u64 |
//! | units tag, config hash, name | u32 length + UTF-8 each |
//! | axes | u32 count, then per axis: name, u64 length, f64 values |
//! | columns | u32 count, then names |
//! | payload | row-major f64 |
//!
//! Axes carry coordinates (positions, times, frequencies); `columns` names the
//! last dimension of tabular datasets. CSV export writes the same data with a
//! header line and `{:.16e}` floats, i.e. 17 significant digits, which parse
//! back to the identical `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"LCDATA\0\0";
pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

/// A named array with optional coordinate axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub axes: Vec<Axis>,
    /// Names for the last dimension when it indexes quantities rather than points.
    pub columns: Vec<String>,
    pub units: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

impl Dataset {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            shape,
            data,
            axes: Vec::new(),
            columns: Vec::new(),
            units: UNITS_TAG.into(),
            config_hash: String::new(),
        })
    }

    /// Table with one row per record and named columns.
    pub fn table(name: impl Into<String>, columns: &[&str], rows: &[Vec<f64>]) -> Result<Self> {
        let width = columns.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::LengthMismatch {
                expected: width,
                actual: bad.len(),
            });
        }
        let mut ds = Self::new(name, vec![rows.len(), width], rows.concat())?;
        ds.columns = columns.iter().map(|c| c.to_string()).collect();
        Ok(ds)
    }

    pub fn with_axis(mut self, axis: Axis) -> Self {
        self.axes.push(axis);
        self
    }

    pub fn with_hash(mut self, hash: &str) -> Self {
        self.config_hash = hash.to_string();
        self
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[DTYPE_F64])?;
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &d in &self.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for s in [&self.units, &self.config_hash, &self.name] {
            write_str(&mut w, s)?;
        }
        w.write_all(&(self.axes.len() as u32).to_le_bytes())?;
        for a in &self.axes {
            write_str(&mut w, &a.name)?;
            w.write_all(&(a.values.len() as u64).to_le_bytes())?;
            for v in &a.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.write_all(&(self.columns.len() as u32).to_le_bytes())?;
        for c in &self.columns {
            write_str(&mut w, c)?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(Error::Format(format!(
                "{}: not a dataset file",
                path.display()
            )));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let mut dtype = [0u8; 1];
        r.read_exact(&mut dtype)?;
        if dtype[0] != DTYPE_F64 {
            return Err(Error::Format(format!("unsupported dtype {}", dtype[0])));
        }
        let ndim = read_u32(&mut r)? as usize;
        let shape = (0..ndim)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let units = read_str(&mut r)?;
        let config_hash = read_str(&mut r)?;
        let name = read_str(&mut r)?;
        let n_axes = read_u32(&mut r)?;
        let mut axes = Vec::new();
        for _ in 0..n_axes {
            let name = read_str(&mut r)?;
            let len = read_u64(&mut r)? as usize;
            axes.push(Axis {
                name,
                values: read_f64s(&mut r, len)?,
            });
        }
        let n_cols = read_u32(&mut r)?;
        let columns = (0..n_cols)
            .map(|_| read_str(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data = read_f64s(&mut r, len)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self {
            name,
            shape,
            data,
            axes,
            columns,
            units,
            config_hash,
        })
    }

    /// Writes a CSV. 1-D data gets one value per line; 2-D data one line per
    /// row. A leading coordinate column is added when the first axis matches
    /// the row count; column names come from `columns` or the second axis.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(
            w,
            "# {} units={} config_hash={}",
            self.name, self.units, self.config_hash
        )?;
        let (rows, cols) = match self.shape.as_slice() {
            [n] => (*n, 1),
            [r, c] => (*r, *c),
            _ => return Err(Error::Format("CSV export supports 1-D and 2-D data".into())),
        };
        let row_axis = self.axes.first().filter(|a| a.values.len() == rows);
        let mut header: Vec<String> = Vec::new();
        if let Some(a) = row_axis {
            header.push(a.name.clone());
        }
        if self.columns.len() == cols {
            header.extend(self.columns.iter().cloned());
        } else if let Some(a) = self.axes.get(1).filter(|a| a.values.len() == cols) {
            header.extend(a.values.iter().map(|v| format!("{}={v:.16e}", a.name)));
        } else if cols == 1 {
            header.push(self.name.clone());
        } else {
            header.extend((0..cols).map(|c| format!("c{c}")));
        }
        writeln!(w, "{}", header.join(","))?;
        for r in 0..rows {
            let mut fields: Vec<String> = Vec::with_capacity(cols + 1);
            if let Some(a) = row_axis {
                fields.push(format!("{:.16e}", a.values[r]));
            }
            fields.extend(
                self.data[r * cols..(r + 1) * cols]
                    .iter()
                    .map(|v| format!("{v:.16e}")),
            );
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads back the numeric body of a CSV written by [`Dataset::write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Format(format!("{f}: {e}")))
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok((header, rows))
}

pub const UNITS_TAG: &str = "hbar=m=g*n0=1";

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| Error::Format(e.to_string()))
}

fn read_f64s(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    let mut b = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

/// Hex SHA-256 of a file's contents.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// One file written by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory.
    pub path: String,
    pub dataset: String,
    pub format: String,
    pub sha256: String,
}

/// Reproducibility record written next to the datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub workers: usize,
    pub crate_version: String,
    pub format_version: u32,
    pub started_unix: u64,
    pub wall_time_s: f64,
    pub n_completed: usize,
    pub n_aborted: usize,
    pub files: Vec<FileEntry>,
    /// Scenario-specific scalar results.
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Machine-readable record of a failed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub scenario: Option<String>,
    pub config_hash: Option<String>,
    pub kind: String,
    pub message: String,
}

impl FailureRecord {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("failure.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
