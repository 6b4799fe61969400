//! Continuous depth from classification maps.
//!
//! Decoders return dense maps (every pixel valid); combine with the ground
//! truth mask via [`DepthMap::with_mask`] before evaluation.

use serde::{Deserialize, Serialize};

use crate::array::{DepthMap, ProbMap, ProbSemantics};
use crate::error::{CarError, Result};
use crate::tables::{DepthTable, TableSpace};

/// Which post-processing rule restores depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMethod {
    SoftWeighted,
    Argmax,
    OrdinalSum,
    Adaptive,
}

/// Handling of an ordinal count of `K` (all classes above threshold).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrdinalDecodeMode {
    /// Counts are clamped to `K - 1` so the result stays on a table center.
    #[default]
    Clamped,
    /// The count is used as is and may land half a bin past the table.
    Literal,
}

fn check_k(table: &DepthTable, probs: &ProbMap) -> Result<()> {
    if probs.k() != table.k() {
        return Err(CarError::shape("probabilities", table.k(), probs.k()));
    }
    Ok(())
}

/// `exp(Σ values[p] ŷ_p)`.
pub fn decode_soft_weighted(table: &DepthTable, probs: &ProbMap) -> Result<DepthMap> {
    table.require(TableSpace::LogCenters)?;
    probs.require(ProbSemantics::Softmax)?;
    check_k(table, probs)?;
    let values = table.values();
    Ok(DepthMap::dense(
        probs
            .matrix()
            .iter_rows()
            .map(|r| r.iter().zip(values).map(|(y, v)| y * v).sum::<f64>().exp())
            .collect(),
    ))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (p, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = p;
        }
    }
    best
}

/// `exp(log a + q (argmax + 0.5))`.
pub fn decode_argmax(table: &DepthTable, probs: &ProbMap) -> Result<DepthMap> {
    let (log_a, q) = table.log_params()?;
    check_k(table, probs)?;
    Ok(DepthMap::dense(
        probs
            .matrix()
            .iter_rows()
            .map(|r| (log_a + q * (argmax(r) as f64 + 0.5)).exp())
            .collect(),
    ))
}

/// Number of entries at or above 0.5.
pub fn ordinal_count(row: &[f64]) -> usize {
    row.iter().filter(|&&y| y >= 0.5).count()
}

pub fn decode_ordinal(table: &DepthTable, probs: &ProbMap) -> Result<DepthMap> {
    decode_ordinal_with(table, probs, OrdinalDecodeMode::Clamped)
}

/// `exp(log a + q (c + 0.5))` with `c` the ordinal count.
pub fn decode_ordinal_with(table: &DepthTable, probs: &ProbMap, mode: OrdinalDecodeMode) -> Result<DepthMap> {
    let (log_a, q) = table.log_params()?;
    probs.require(ProbSemantics::PerClassSigmoid)?;
    check_k(table, probs)?;
    let top = table.k() - 1;
    Ok(DepthMap::dense(
        probs
            .matrix()
            .iter_rows()
            .map(|r| {
                let c = match mode {
                    OrdinalDecodeMode::Clamped => ordinal_count(r).min(top),
                    OrdinalDecodeMode::Literal => ordinal_count(r),
                };
                (log_a + q * (c as f64 + 0.5)).exp()
            })
            .collect(),
    ))
}

/// `Σ values[p] ŷ_p` in meters.
pub fn decode_adaptive(table: &DepthTable, probs: &ProbMap) -> Result<DepthMap> {
    table.require(TableSpace::LinearAdaptive)?;
    probs.require(ProbSemantics::Softmax)?;
    check_k(table, probs)?;
    let values = table.values();
    Ok(DepthMap::dense(
        probs
            .matrix()
            .iter_rows()
            .map(|r| r.iter().zip(values).map(|(y, v)| y * v).sum())
            .collect(),
    ))
}

pub fn decode(table: &DepthTable, probs: &ProbMap, method: DecodeMethod, ordinal: OrdinalDecodeMode) -> Result<DepthMap> {
    match method {
        DecodeMethod::SoftWeighted => decode_soft_weighted(table, probs),
        DecodeMethod::Argmax => decode_argmax(table, probs),
        DecodeMethod::OrdinalSum => decode_ordinal_with(table, probs, ordinal),
        DecodeMethod::Adaptive => decode_adaptive(table, probs),
    }
}
