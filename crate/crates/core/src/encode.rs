//! Ground-truth depth to per-pixel classification targets.
//!
//! Every encoder works row by row and only reads the table, so rows of
//! masked-out pixels are left at zero and never couple to other pixels.

use serde::{Deserialize, Serialize};

use crate::array::{GroundTruthDepth, Matrix};
use crate::error::{CarError, Result};
use crate::tables::{DepthTable, IndexMode, TableSpace};

/// Smoothing coefficient of the unnormalized log-distance Gaussian (Yang et al.).
pub const DEFAULT_GAMMA_SMOOTH1: f64 = 15.0;
/// Smoothing coefficient of the normalized log-distance Gaussian (SORN).
pub const DEFAULT_GAMMA_SMOOTH2: f64 = 1.0;
/// Index-space coefficient of the information-gain Gaussian (Cao et al.).
///
/// Equivalent to a log-space coefficient of `0.5 / q²`, i.e. 65 for the
/// 50-bin `[1, 80]` table it was reported for.
pub const DEFAULT_GAMMA_SMOOTH3: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    OneHot,
    Ordinal,
    Smooth1,
    Smooth2,
    Smooth3,
}

impl LabelKind {
    pub fn name(self) -> &'static str {
        match self {
            LabelKind::OneHot => "one_hot",
            LabelKind::Ordinal => "ordinal",
            LabelKind::Smooth1 => "smooth1",
            LabelKind::Smooth2 => "smooth2",
            LabelKind::Smooth3 => "smooth3",
        }
    }
}

/// Which ordinal prefix a class index `k` turns into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrdinalMode {
    /// `y_p = 1` iff `p <= k`.
    #[default]
    Literal,
    /// `y_p = 1` iff `p < k`; the count of ones then equals `k`.
    Strict,
}

impl OrdinalMode {
    #[inline]
    pub fn is_set(self, p: usize, k: usize) -> bool {
        match self {
            OrdinalMode::Literal => p <= k,
            OrdinalMode::Strict => p < k,
        }
    }
}

/// Per-pixel targets, one row per pixel of the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    data: Matrix,
    kind: LabelKind,
    gamma: Option<f64>,
}

impl LabelMap {
    /// Wraps externally produced targets (e.g. read from `.npy`).
    pub fn from_matrix(data: Matrix, kind: LabelKind, gamma: Option<f64>) -> Result<Self> {
        if !data.all_finite() {
            return Err(CarError::NonFinite("label map"));
        }
        Ok(LabelMap { data, kind, gamma })
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.data.row(j)
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn k(&self) -> usize {
        self.data.cols()
    }

    pub(crate) fn require(&self, accepted: &[LabelKind], expected: &'static str) -> Result<()> {
        if !accepted.contains(&self.kind) {
            return Err(CarError::WrongLabelKind {
                expected,
                found: self.kind.name(),
            });
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(CarError::InvalidGamma(gamma));
    }
    Ok(())
}

fn checked_depth(gt: &GroundTruthDepth, j: usize) -> Result<f64> {
    let d = gt.values[j];
    if !(d.is_finite() && d > 0.0) {
        return Err(CarError::NonPositiveDepth { index: j, value: d });
    }
    Ok(d)
}

/// Fills one row per valid pixel with `fill(row, depth)`.
fn encode_rows<F>(gt: &GroundTruthDepth, table: &DepthTable, mut fill: F) -> Result<Matrix>
where
    F: FnMut(&mut [f64], f64) -> Result<()>,
{
    table.require(TableSpace::LogCenters)?;
    let mut out = Matrix::zeros(gt.len(), table.k());
    for j in 0..gt.len() {
        if gt.mask[j] {
            let d = checked_depth(gt, j)?;
            fill(out.row_mut(j), d)?;
        }
    }
    Ok(out)
}

fn index_of(table: &DepthTable, d: f64, mode: IndexMode) -> Result<usize> {
    table.class_index_with(d, mode)
}

/// Class index per pixel (0 for masked-out pixels).
pub fn class_indices(gt: &GroundTruthDepth, table: &DepthTable, mode: IndexMode) -> Result<Vec<usize>> {
    table.require(TableSpace::LogCenters)?;
    (0..gt.len())
        .map(|j| {
            if gt.mask[j] {
                index_of(table, checked_depth(gt, j)?, mode)
            } else {
                Ok(0)
            }
        })
        .collect()
}

pub fn encode_onehot(gt: &GroundTruthDepth, table: &DepthTable) -> Result<LabelMap> {
    encode_onehot_with(gt, table, IndexMode::Nearest)
}

pub fn encode_onehot_with(gt: &GroundTruthDepth, table: &DepthTable, mode: IndexMode) -> Result<LabelMap> {
    let data = encode_rows(gt, table, |row, d| {
        row[index_of(table, d, mode)?] = 1.0;
        Ok(())
    })?;
    Ok(LabelMap {
        data,
        kind: LabelKind::OneHot,
        gamma: None,
    })
}

pub fn encode_ordinal(gt: &GroundTruthDepth, table: &DepthTable) -> Result<LabelMap> {
    encode_ordinal_with(gt, table, OrdinalMode::Literal)
}

pub fn encode_ordinal_with(gt: &GroundTruthDepth, table: &DepthTable, mode: OrdinalMode) -> Result<LabelMap> {
    let data = encode_rows(gt, table, |row, d| {
        let k = index_of(table, d, IndexMode::Nearest)?;
        ordinal_row(k, mode, row);
        Ok(())
    })?;
    Ok(LabelMap {
        data,
        kind: LabelKind::Ordinal,
        gamma: None,
    })
}

/// Writes the ordinal prefix of class `k` into `out`.
pub fn ordinal_row(k: usize, mode: OrdinalMode, out: &mut [f64]) {
    for (p, y) in out.iter_mut().enumerate() {
        *y = if mode.is_set(p, k) { 1.0 } else { 0.0 };
    }
}

/// `out[p] = exp(-gamma (log_d - centers[p])²)`.
pub fn smooth1_row(log_d: f64, centers: &[f64], gamma: f64, out: &mut [f64]) {
    for (y, &c) in out.iter_mut().zip(centers) {
        let r = log_d - c;
        *y = (-gamma * r * r).exp();
    }
}

/// Unnormalized Gaussian over log-distance to each center.
pub fn encode_smooth1(gt: &GroundTruthDepth, table: &DepthTable, gamma: f64) -> Result<LabelMap> {
    check_gamma(gamma)?;
    let data = encode_rows(gt, table, |row, d| {
        smooth1_row(d.ln(), table.values(), gamma, row);
        Ok(())
    })?;
    Ok(LabelMap {
        data,
        kind: LabelKind::Smooth1,
        gamma: Some(gamma),
    })
}

/// Normalized Gaussian over log-distance; rows sum to one.
pub fn encode_smooth2(gt: &GroundTruthDepth, table: &DepthTable, gamma: f64) -> Result<LabelMap> {
    check_gamma(gamma)?;
    let data = encode_rows(gt, table, |row, d| {
        let log_d = d.ln();
        // shift by the largest exponent so distant depths cannot underflow the whole row
        let mut top = f64::NEG_INFINITY;
        for (y, &c) in row.iter_mut().zip(table.values()) {
            let r = log_d - c;
            *y = -gamma * r * r;
            top = top.max(*y);
        }
        let mut s = 0.0;
        for y in row.iter_mut() {
            *y = (*y - top).exp();
            s += *y;
        }
        for y in row.iter_mut() {
            *y /= s;
        }
        Ok(())
    })?;
    Ok(LabelMap {
        data,
        kind: LabelKind::Smooth2,
        gamma: Some(gamma),
    })
}

/// Index-space Gaussian `exp(-gamma (k - p)²)` around the class index `k`.
pub fn encode_smooth3(gt: &GroundTruthDepth, table: &DepthTable, gamma: f64) -> Result<LabelMap> {
    check_gamma(gamma)?;
    let data = encode_rows(gt, table, |row, d| {
        let k = index_of(table, d, IndexMode::Nearest)? as f64;
        for (p, y) in row.iter_mut().enumerate() {
            let r = k - p as f64;
            *y = (-gamma * r * r).exp();
        }
        Ok(())
    })?;
    Ok(LabelMap {
        data,
        kind: LabelKind::Smooth3,
        gamma: Some(gamma),
    })
}

/// Dispatch on a label kind. `gamma` is ignored for one-hot and ordinal targets.
pub fn encode(
    gt: &GroundTruthDepth,
    table: &DepthTable,
    kind: LabelKind,
    gamma: f64,
    ordinal_mode: OrdinalMode,
) -> Result<LabelMap> {
    match kind {
        LabelKind::OneHot => encode_onehot(gt, table),
        LabelKind::Ordinal => encode_ordinal_with(gt, table, ordinal_mode),
        LabelKind::Smooth1 => encode_smooth1(gt, table, gamma),
        LabelKind::Smooth2 => encode_smooth2(gt, table, gamma),
        LabelKind::Smooth3 => encode_smooth3(gt, table, gamma),
    }
}
