//! File interchange: `.npy` arrays, JSON tables and configs, CSV, PGM.

pub mod npy;
pub mod pgm;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::array::{DepthMap, GroundTruthDepth, Matrix, ProbMap, ProbSemantics};
use crate::error::{CarError, Result};
use crate::tables::DepthTable;

pub use npy::{read_array, write_array, NpyArray, NpyData};

/// `depth.npy` -> `depth_mask.npy`.
pub fn mask_path_for(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_mask.npy"))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_table(path: impl AsRef<Path>) -> Result<DepthTable> {
    read_json(path)
}

pub fn write_table(path: impl AsRef<Path>, table: &DepthTable) -> Result<()> {
    write_json(path, table)
}

pub fn read_f64_vec(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    read_array(path)?.into_f64_1d()
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Vec<bool>> {
    read_array(path)?.into_bool_1d()
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    read_array(path)?.into_matrix()
}

pub fn write_f64_vec(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    write_array(path, &NpyArray::f64_1d(values.to_vec()))
}

pub fn write_mask(path: impl AsRef<Path>, mask: &[bool]) -> Result<()> {
    write_array(path, &NpyArray::bool_1d(mask.to_vec()))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    write_array(path, &NpyArray::from_matrix(m))
}

/// Reads values and a mask. Without an explicit mask the paired
/// `<stem>_mask.npy` is used if present, otherwise every pixel is valid.
fn read_values_and_mask(path: &Path, mask: Option<&Path>) -> Result<(Vec<f64>, Vec<bool>)> {
    let values = read_f64_vec(path)?;
    let paired = mask_path_for(path);
    let mask = match mask {
        Some(m) => read_mask(m)?,
        None if paired.exists() => read_mask(&paired)?,
        None => vec![true; values.len()],
    };
    if mask.len() != values.len() {
        return Err(CarError::shape("mask", values.len(), mask.len()));
    }
    Ok((values, mask))
}

pub fn read_depth_map(path: impl AsRef<Path>, mask: Option<&Path>) -> Result<DepthMap> {
    let (values, mask) = read_values_and_mask(path.as_ref(), mask)?;
    DepthMap::new(values, mask)
}

pub fn read_ground_truth(path: impl AsRef<Path>, mask: Option<&Path>) -> Result<GroundTruthDepth> {
    let (values, mask) = read_values_and_mask(path.as_ref(), mask)?;
    GroundTruthDepth::new(values, mask)
}

/// Writes `path` and its paired `<stem>_mask.npy`.
pub fn write_depth_map(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    write_f64_vec(path.as_ref(), &depth.values)?;
    write_mask(mask_path_for(path.as_ref()), &depth.mask)
}

pub fn read_probs(path: impl AsRef<Path>, semantics: ProbSemantics) -> Result<ProbMap> {
    ProbMap::new(read_matrix(path)?, semantics)
}

/// `epoch,loss` CSV.
pub fn loss_trace_csv(trace: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in trace.iter().enumerate() {
        s.push_str(&format!("{i},{l}\n"));
    }
    s
}
