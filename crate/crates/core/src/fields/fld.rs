//! `.fld` field files: one JSON header line, then little-endian `f64`
//! pairs `(re, im)` in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{GridSpec, SpatialField, SpectralField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Spatial,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub dim: usize,
    pub extent: Vec<f64>,
    pub points: Vec<usize>,
    pub kind: FieldKind,
}

/// Contents of a field file.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldFile {
    Spatial(SpatialField),
    Spectral(SpectralField),
}

impl From<SpatialField> for FieldFile {
    fn from(f: SpatialField) -> Self {
        FieldFile::Spatial(f)
    }
}

impl From<SpectralField> for FieldFile {
    fn from(f: SpectralField) -> Self {
        FieldFile::Spectral(f)
    }
}

pub fn write_field(path: impl AsRef<Path>, field: &FieldFile) -> Result<()> {
    let (grid, data, kind) = match field {
        FieldFile::Spatial(f) => (&f.grid, &f.samples, FieldKind::Spatial),
        FieldFile::Spectral(f) => (&f.grid, &f.coeffs, FieldKind::Spectral),
    };
    let header = FieldHeader {
        dim: grid.dim(),
        extent: grid.extent().to_vec(),
        points: grid.points().to_vec(),
        kind,
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for z in data {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<FieldFile> {
    let mut input = BufReader::new(File::open(path)?);
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: FieldHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.dim != header.extent.len() || header.dim != header.points.len() {
        return Err(Error::Format("header dim disagrees with extent/points".into()));
    }
    let grid = GridSpec::new(header.extent, header.points).map_err(|e| Error::Format(e.to_string()))?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != grid.len() * 16 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            grid.len() * 16,
            bytes.len()
        )));
    }
    let data: Vec<Complex64> = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok(match header.kind {
        FieldKind::Spatial => FieldFile::Spatial(SpatialField::new(grid, data)?),
        FieldKind::Spectral => FieldFile::Spectral(SpectralField::new(grid, data)?),
    })
}
