use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{featurize_wafer, FeatureVector, PIConfig};
use crate::error::{Error, Result};
use crate::json_io::{read_json, write_json};
use crate::wafer_sim::{Label, WaferMap};

const MAGIC: &[u8; 8] = b"WTDAFEAT";
const VERSION: u32 = 1;

/// Featurizes every wafer. With `jobs > 1` the work is spread over a pool of
/// that many threads; the output is the same as the sequential run.
pub fn featurize_all(wafers: &[&WaferMap], cfg: &PIConfig, jobs: usize) -> Result<Vec<FeatureVector>> {
    cfg.validate()?;
    let one = |w: &&WaferMap| featurize_wafer(&w.cloud(), cfg);
    if jobs <= 1 {
        return wafers.iter().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| wafers.par_iter().map(one).collect())
}

/// A labeled feature matrix, one row per wafer.
///
/// Stored either as CSV (`label,f0,f1,...`) or as a little-endian binary
/// container; both get a JSON sidecar (`<file>.json`) with the image
/// configuration and the wafer ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub config: PIConfig,
    pub dim: usize,
    pub ids: Vec<String>,
    pub labels: Vec<Label>,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: PIConfig,
    rows: usize,
    dim: usize,
    ids: Vec<String>,
}

impl FeatureSet {
    pub fn new(config: PIConfig, dim: usize) -> Self {
        Self {
            config,
            dim,
            ids: Vec::new(),
            labels: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Featurizes `wafers` into a set keyed by `ids`.
    pub fn from_wafers(ids: Vec<String>, wafers: &[&WaferMap], config: PIConfig, jobs: usize) -> Result<Self> {
        if ids.len() != wafers.len() {
            return Err(Error::Shape {
                expected: wafers.len(),
                actual: ids.len(),
            });
        }
        let vectors = featurize_all(wafers, &config, jobs)?;
        let mut set = Self::new(config.clone(), config.feature_len());
        for ((id, w), v) in ids.into_iter().zip(wafers).zip(vectors) {
            set.push(id, w.label, &v.values)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, id: String, label: Label, values: &[f64]) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: values.len(),
            });
        }
        self.ids.push(id);
        self.labels.push(label);
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.index()).collect()
    }

    /// The rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = Self::new(self.config.clone(), self.dim);
        for &i in indices {
            out.ids.push(self.ids[i].clone());
            out.labels.push(self.labels[i]);
            out.data.extend_from_slice(self.row(i));
        }
        out
    }

    /// Appends every row of `other`.
    pub fn extend(&mut self, other: &FeatureSet) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: other.dim,
            });
        }
        self.ids.extend(other.ids.iter().cloned());
        self.labels.extend(&other.labels);
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    fn sidecar_path(path: &Path) -> PathBuf {
        let mut name = path.as_os_str().to_owned();
        name.push(".json");
        PathBuf::from(name)
    }

    fn is_csv(path: &Path) -> bool {
        path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    }

    /// Writes CSV if `path` ends in `.csv`, the binary container otherwise,
    /// plus the sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        if Self::is_csv(path) {
            self.write_csv(path)?;
        } else {
            self.write_bin(path)?;
        }
        let sidecar = Sidecar {
            config: self.config.clone(),
            rows: self.len(),
            dim: self.dim,
            ids: self.ids.clone(),
        };
        write_json(&Self::sidecar_path(path), &sidecar)
    }

    /// Reads a file written by [`FeatureSet::save`]. A CSV file without a
    /// sidecar gets the default configuration and positional ids.
    pub fn load(path: &Path) -> Result<Self> {
        let (labels, dim, data) = if Self::is_csv(path) {
            read_csv(path)?
        } else {
            read_bin(path)?
        };
        let sidecar_path = Self::sidecar_path(path);
        let sidecar: Option<Sidecar> = if sidecar_path.exists() || !Self::is_csv(path) {
            Some(read_json(&sidecar_path)?)
        } else {
            None
        };
        let rows = labels.len();
        let (config, ids) = match sidecar {
            Some(s) => {
                if s.rows != rows || s.dim != dim || s.ids.len() != rows {
                    return Err(Error::Format(format!(
                        "{} describes {}x{} features but the data is {rows}x{dim}",
                        sidecar_path.display(),
                        s.rows,
                        s.dim
                    )));
                }
                (s.config, s.ids)
            }
            None => (PIConfig::default(), (0..rows).map(|i| format!("row{i}")).collect()),
        };
        Ok(Self {
            config,
            dim,
            ids,
            labels,
            data,
        })
    }

    fn write_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        write!(out, "label").map_err(io)?;
        for k in 0..self.dim {
            write!(out, ",f{k}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
        for (i, label) in self.labels.iter().enumerate() {
            write!(out, "{label}").map_err(io)?;
            for v in self.row(i) {
                // `{}` prints the shortest string that parses back exactly
                write!(out, ",{v}").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    fn write_bin(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(28 + self.len() + 8 * self.data.len());
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.dim as u64).to_le_bytes());
        bytes.extend(self.labels.iter().map(|l| l.index() as u8));
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

fn format_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

fn read_csv(path: &Path) -> Result<(Vec<Label>, usize, Vec<f64>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(format_err(path, "empty file")),
    };
    let dim = header.split(',').count() - 1;
    if !header.starts_with("label") || dim == 0 {
        return Err(format_err(path, "header must be `label,f0,...`"));
    }
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label: Label = fields.next().unwrap_or_default().parse()?;
        let before = data.len();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| format_err(path, format!("line {}: bad number {f:?}", n + 2)))?;
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(format_err(
                path,
                format!("line {}: expected {dim} values, got {}", n + 2, data.len() - before),
            ));
        }
        labels.push(label);
    }
    Ok((labels, dim, data))
}

fn read_bin(path: &Path) -> Result<(Vec<Label>, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 28 || &bytes[..8] != MAGIC {
        return Err(format_err(path, "not a feature container"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(28 + rows));
    if expected != Some(bytes.len()) {
        return Err(format_err(path, "truncated or oversized payload"));
    }
    let labels = bytes[28..28 + rows]
        .iter()
        .map(|&b| Label::from_index(b as usize))
        .collect::<Result<Vec<_>>>()?;
    let data = bytes[28 + rows..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((labels, dim, data))
}
