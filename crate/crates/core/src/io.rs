//! On-disk container: a JSON manifest next to a raw little-endian,
//! row-major `f64` blob holding one or more tensors back to back.
//!
//! ```text
//! bases.json   {"format": "randlora-container", "dtype": "f64", "layout": "row-major",
//!               "endianness": "little", "blob": "bases.bin", "tensors": [...], ...}
//! bases.bin    tensor 0 | tensor 1 | ...
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adapters::RandLoraAdapter;
use crate::error::{Error, Result};
use crate::randbasis::{BasisConfig, BasisSet};
use crate::Matrix;

pub const FORMAT: &str = "randlora-container";
pub const VERSION: u32 = 1;

/// Largest target accepted from CSV, per side.
pub const CSV_MAX_SIDE: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in elements.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub dtype: String,
    pub layout: String,
    pub endianness: String,
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub config: Value,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub provenance: Value,
}

/// A named row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn from_matrix(name: &str, m: &Matrix) -> Self {
        Self {
            name: name.to_owned(),
            shape: vec![m.nrows(), m.ncols()],
            data: m.transpose().iter().copied().collect(),
        }
    }

    /// Stack equally shaped matrices into a `len × rows × cols` tensor.
    pub fn from_stack(name: &str, ms: &[Matrix]) -> Self {
        let (rows, cols) = ms.first().map_or((0, 0), |m| m.shape());
        Self {
            name: name.to_owned(),
            shape: vec![ms.len(), rows, cols],
            data: ms.iter().flat_map(|m| m.transpose().iter().copied().collect::<Vec<_>>()).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        match self.shape[..] {
            [rows, cols] => Ok(Matrix::from_row_slice(rows, cols, &self.data)),
            _ => Err(Error::Format(format!("tensor '{}' is not 2-D: {:?}", self.name, self.shape))),
        }
    }

    pub fn to_stack(&self) -> Result<Vec<Matrix>> {
        match self.shape[..] {
            [len, rows, cols] => Ok((0..len)
                .map(|i| Matrix::from_row_slice(rows, cols, &self.data[i * rows * cols..(i + 1) * rows * cols]))
                .collect()),
            _ => Err(Error::Format(format!("tensor '{}' is not 3-D: {:?}", self.name, self.shape))),
        }
    }
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Write a container. `manifest_path` is the JSON file; the blob goes next to it with a `.bin` extension.
pub fn write_container(manifest_path: &Path, kind: &str, config: Value, tensors: &[Tensor], provenance: Value) -> Result<Manifest> {
    let blob = blob_path(manifest_path);
    let blob_name = blob
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Format(format!("bad container path {}", manifest_path.display())))?
        .to_owned();
    let mut entries = Vec::with_capacity(tensors.len());
    let mut bytes = Vec::new();
    let mut offset = 0;
    for t in tensors {
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(Error::Format(format!("tensor '{}' shape {:?} does not match data", t.name, t.shape)));
        }
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
        });
        offset += t.data.len();
        for v in &t.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        kind: kind.into(),
        dtype: "f64".into(),
        layout: "row-major".into(),
        endianness: "little".into(),
        blob: blob_name,
        tensors: entries,
        config,
        provenance,
    };
    fs::write(&blob, bytes)?;
    fs::write(manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn read_container(manifest_path: &Path) -> Result<(Manifest, Vec<Tensor>)> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    if manifest.format != FORMAT {
        return Err(Error::Format(format!("unknown format '{}'", manifest.format)));
    }
    if manifest.dtype != "f64" || manifest.layout != "row-major" || manifest.endianness != "little" {
        return Err(Error::Format(format!(
            "unsupported encoding {}/{}/{}",
            manifest.dtype, manifest.layout, manifest.endianness
        )));
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let bytes = fs::read(dir.join(&manifest.blob))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("blob length is not a multiple of 8".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let tensors = manifest
        .tensors
        .iter()
        .map(|e| {
            let len: usize = e.shape.iter().product();
            let data = values
                .get(e.offset..e.offset + len)
                .ok_or_else(|| Error::Format(format!("tensor '{}' runs past the end of the blob", e.name)))?;
            Ok(Tensor {
                name: e.name.clone(),
                shape: e.shape.clone(),
                data: data.to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, tensors))
}

fn take<'a>(tensors: &'a [Tensor], name: &str) -> Result<&'a Tensor> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::Format(format!("missing tensor '{name}'")))
}

fn expect_kind(m: &Manifest, kind: &str) -> Result<()> {
    if m.kind != kind {
        return Err(Error::Format(format!("expected a '{kind}' container, found '{}'", m.kind)));
    }
    Ok(())
}

pub fn save_matrix(path: &Path, m: &Matrix, provenance: Value) -> Result<Manifest> {
    write_container(path, "matrix", Value::Null, &[Tensor::from_matrix("matrix", m)], provenance)
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let (manifest, tensors) = read_container(path)?;
    expect_kind(&manifest, "matrix")?;
    take(&tensors, "matrix")?.to_matrix()
}

pub fn save_basis_set(path: &Path, set: &BasisSet, provenance: Value) -> Result<Manifest> {
    write_container(
        path,
        "basis-set",
        serde_json::to_value(set.config())?,
        &[Tensor::from_stack("b_stack", set.b_stack()), Tensor::from_stack("a_stack", set.a_stack())],
        provenance,
    )
}

pub fn load_basis_set(path: &Path) -> Result<BasisSet> {
    let (manifest, tensors) = read_container(path)?;
    expect_kind(&manifest, "basis-set")?;
    let config: BasisConfig = serde_json::from_value(manifest.config)?;
    BasisSet::from_parts(config, take(&tensors, "b_stack")?.to_stack()?, take(&tensors, "a_stack")?.to_stack()?)
}

#[derive(Serialize, Deserialize)]
struct AdapterHeader {
    slice: crate::randbasis::LayerSlice,
    alpha: f64,
    basis: BasisConfig,
}

/// Save an adapter's trainable stacks together with the configuration of the basis set it is bound to.
pub fn save_adapter(path: &Path, adapter: &RandLoraAdapter, basis: &BasisConfig, provenance: Value) -> Result<Manifest> {
    let header = AdapterHeader {
        slice: adapter.slice.clone(),
        alpha: adapter.alpha,
        basis: basis.clone(),
    };
    write_container(
        path,
        "randlora-adapter",
        serde_json::to_value(header)?,
        &[
            Tensor::from_matrix("lambda_stack", &adapter.lambda_stack),
            Tensor::from_matrix("gamma_stack", &adapter.gamma_stack),
        ],
        provenance,
    )
}

/// Load an adapter and the basis configuration needed to regenerate its bases.
pub fn load_adapter(path: &Path) -> Result<(RandLoraAdapter, BasisConfig)> {
    let (manifest, tensors) = read_container(path)?;
    expect_kind(&manifest, "randlora-adapter")?;
    let header: AdapterHeader = serde_json::from_value(manifest.config)?;
    let adapter = RandLoraAdapter {
        slice: header.slice,
        lambda_stack: take(&tensors, "lambda_stack")?.to_matrix()?,
        gamma_stack: take(&tensors, "gamma_stack")?.to_matrix()?,
        alpha: header.alpha,
    };
    Ok((adapter, header.basis))
}

/// Read a dense matrix from CSV (no header, one row per line).
pub fn read_csv_matrix(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Format(format!("bad number '{f}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if n_rows == 0 || n_cols == 0 || rows.iter().any(|r| r.len() != n_cols) {
        return Err(Error::Format("CSV matrix must be non-empty and rectangular".into()));
    }
    if n_rows > CSV_MAX_SIDE || n_cols > CSV_MAX_SIDE {
        return Err(Error::Format(format!(
            "CSV targets are limited to {CSV_MAX_SIDE}x{CSV_MAX_SIDE}, got {n_rows}x{n_cols}"
        )));
    }
    Ok(Matrix::from_row_iterator(n_rows, n_cols, rows.into_iter().flatten()))
}

/// Write a matrix as CSV using shortest round-trip float formatting.
pub fn write_csv_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
