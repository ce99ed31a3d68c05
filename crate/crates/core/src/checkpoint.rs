//! Checkpoints: a JSON manifest next to a raw little-endian `f64` payload.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::ScalarField;
use crate::grid::StripGrid;
use crate::state::SolverParams;

pub const FORMAT_VERSION: u32 = 1;
const ENDIANNESS: &str = "little";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub grid: StripGrid,
    pub params: SolverParams,
    /// Absent for the limit system.
    pub eps: Option<f64>,
    pub t: f64,
    pub fields: Vec<(String, ScalarField)>,
}

impl Checkpoint {
    pub fn field(&self, name: &str) -> Option<&ScalarField> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FieldEntry {
    name: String,
    /// Byte offset into the payload.
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    endianness: String,
    grid: StripGrid,
    params: SolverParams,
    eps: Option<f64>,
    t: f64,
    payload: String,
    fields: Vec<FieldEntry>,
}

fn payload_path(manifest: &Path, name: &str) -> PathBuf {
    manifest.with_file_name(name)
}

/// Writes `<stem>.json` and `<stem>.bin`; returns the manifest path.
pub fn write_checkpoint(stem: &Path, ck: &Checkpoint) -> Result<PathBuf> {
    let manifest_path = stem.with_extension("json");
    let bin_path = stem.with_extension("bin");
    let mut bytes = Vec::new();
    let mut fields = Vec::new();
    for (name, f) in &ck.fields {
        if f.grid() != &ck.grid {
            return Err(LabError::InvalidGrid(format!(
                "field `{name}` is on a different grid"
            )));
        }
        fields.push(FieldEntry {
            name: name.clone(),
            offset: bytes.len(),
            len: f.data().len(),
        });
        for v in f.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        endianness: ENDIANNESS.into(),
        grid: ck.grid,
        params: ck.params.clone(),
        eps: ck.eps,
        t: ck.t,
        payload: bin_path
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| LabError::Config(format!("bad checkpoint path {}", stem.display())))?
            .to_string(),
        fields,
    };
    std::fs::write(&bin_path, &bytes)?;
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest_path)
}

pub fn read_checkpoint(manifest_path: &Path) -> Result<Checkpoint> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(LabError::VersionMismatch {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if manifest.endianness != ENDIANNESS {
        return Err(LabError::Config(format!(
            "unsupported endianness `{}`",
            manifest.endianness
        )));
    }
    let grid = StripGrid::new(manifest.grid.nx, manifest.grid.ny, manifest.grid.lx)?;
    let bytes = std::fs::read(payload_path(manifest_path, &manifest.payload))?;
    let mut fields = Vec::new();
    for e in &manifest.fields {
        let want = e.len * 8;
        if e.len != grid.len() {
            return Err(LabError::CorruptPayload {
                field: e.name.clone(),
                expected: grid.len() * 8,
                found: want,
            });
        }
        let end = e.offset + want;
        if end > bytes.len() {
            return Err(LabError::CorruptPayload {
                field: e.name.clone(),
                expected: want,
                found: bytes.len().saturating_sub(e.offset),
            });
        }
        let data = bytes[e.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        fields.push((e.name.clone(), ScalarField::from_vec(grid, data)));
    }
    Ok(Checkpoint {
        grid,
        params: manifest.params,
        eps: manifest.eps,
        t: manifest.t,
        fields,
    })
}
