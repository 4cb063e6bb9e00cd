//! Dataset export/import.
//!
//! `<stem>.bin` is a flat table of little-endian binary64 reals, one row per
//! sample: the label (0.0 or 1.0) followed by `modalities * dim_f` feature
//! values, modality-major. `<stem>.toml` is a readable header holding the
//! scenario parameters and the table shape.

use crate::error::DataError;
use crate::evalgen::synth::{Dataset, SyntheticSpec};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub rows: usize,
    /// Reals per row, including the leading label column.
    pub columns: usize,
    pub modalities: usize,
    pub dim_f: usize,
    pub spec: SyntheticSpec,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("toml"))
}

pub fn export_dataset(stem: &Path, spec: &SyntheticSpec, data: &Dataset) -> Result<(), DataError> {
    let (bin, hdr) = paths(stem);
    let header = DatasetHeader {
        rows: data.len(),
        columns: 1 + data.modalities() * data.dim_f(),
        modalities: data.modalities(),
        dim_f: data.dim_f(),
        spec: spec.clone(),
    };
    let text = toml::to_string(&header).map_err(|e| DataError::Format(e.to_string()))?;
    fs::write(hdr, text)?;
    let mut w = BufWriter::new(fs::File::create(bin)?);
    let width = data.modalities() * data.dim_f();
    for (i, &label) in data.labels().iter().enumerate() {
        w.write_all(&f64::from(label).to_le_bytes())?;
        for v in &data.values()[i * width..(i + 1) * width] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn import_dataset(stem: &Path) -> Result<(DatasetHeader, Dataset), DataError> {
    let (bin, hdr) = paths(stem);
    let header: DatasetHeader =
        toml::from_str(&fs::read_to_string(hdr)?).map_err(|e| DataError::Format(e.to_string()))?;
    if header.columns != 1 + header.modalities * header.dim_f {
        return Err(DataError::Format("column count does not match modalities x dim_f".into()));
    }
    let bytes = fs::read(bin)?;
    if bytes.len() != header.rows * header.columns * 8 {
        return Err(DataError::Format(format!(
            "expected {} bytes, found {}",
            header.rows * header.columns * 8,
            bytes.len()
        )));
    }
    let mut labels = Vec::with_capacity(header.rows);
    let mut values = Vec::with_capacity(header.rows * (header.columns - 1));
    for row in bytes.chunks_exact(header.columns * 8) {
        let mut reals = row.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let label = reals.next().unwrap_or(f64::NAN);
        labels.push(match label {
            0.0 => 0,
            1.0 => 1,
            _ => return Err(DataError::Format(format!("label {label} is not 0 or 1"))),
        });
        values.extend(reals);
    }
    let data = Dataset::new(header.modalities, header.dim_f, values, labels)?;
    Ok((header, data))
}
