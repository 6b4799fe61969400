//! Row-major per-pixel containers shared by every stage.

use crate::error::{CarError, Result};

/// Dense row-major `rows × cols` matrix; one row per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(CarError::shape(
                "matrix",
                format!("{rows}x{cols} = {} values", rows.saturating_mul(cols)),
                format!("{} values", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(CarError::shape("matrix rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// How the per-pixel prediction vectors were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbSemantics {
    /// Softmax output: rows are nonnegative and sum to one.
    Softmax,
    /// Independent per-class sigmoids: entries in `[0, 1]`, rows need not sum to one.
    PerClassSigmoid,
}

impl ProbSemantics {
    pub fn name(self) -> &'static str {
        match self {
            ProbSemantics::Softmax => "softmax",
            ProbSemantics::PerClassSigmoid => "per-class sigmoid",
        }
    }
}

/// Row sums of softmax maps must be within this of one.
pub const SOFTMAX_SUM_TOL: f64 = 1e-9;

/// Per-pixel class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    data: Matrix,
    semantics: ProbSemantics,
}

impl ProbMap {
    /// Validates the row invariants of `semantics`.
    pub fn new(data: Matrix, semantics: ProbSemantics) -> Result<Self> {
        for (j, row) in data.iter_rows().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(CarError::NonFinite("probability map"));
            }
            match semantics {
                ProbSemantics::Softmax => {
                    if row.iter().any(|&v| v < 0.0) {
                        return Err(CarError::InvalidProbabilities(format!(
                            "negative entry in row {j}"
                        )));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > SOFTMAX_SUM_TOL {
                        return Err(CarError::InvalidProbabilities(format!(
                            "row {j} sums to {s}, expected 1"
                        )));
                    }
                }
                ProbSemantics::PerClassSigmoid => {
                    if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                        return Err(CarError::InvalidProbabilities(format!(
                            "entry {v} in row {j} is outside [0, 1]"
                        )));
                    }
                }
            }
        }
        Ok(ProbMap { data, semantics })
    }

    pub fn softmax_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, ProbSemantics::Softmax)
    }

    pub fn sigmoid_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, ProbSemantics::PerClassSigmoid)
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(data: Matrix, semantics: ProbSemantics) -> Self {
        ProbMap { data, semantics }
    }

    pub fn semantics(&self) -> ProbSemantics {
        self.semantics
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn k(&self) -> usize {
        self.data.cols()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.data.row(j)
    }

    pub(crate) fn require(&self, semantics: ProbSemantics) -> Result<()> {
        if self.semantics != semantics {
            return Err(CarError::SemanticsMismatch {
                expected: semantics.name(),
                found: self.semantics.name(),
            });
        }
        Ok(())
    }
}

fn check_mask_len(what: &'static str, values: usize, mask: usize) -> Result<()> {
    if values != mask {
        return Err(CarError::shape(what, format!("{values} mask entries"), mask));
    }
    Ok(())
}

/// Predicted per-pixel depth in meters with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl DepthMap {
    pub fn new(values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        check_mask_len("depth map", values.len(), mask.len())?;
        Ok(DepthMap { values, mask })
    }

    /// All pixels valid.
    pub fn dense(values: Vec<f64>) -> Self {
        let mask = vec![true; values.len()];
        DepthMap { values, mask }
    }

    /// Replaces the mask; lengths must agree.
    pub fn with_mask(mut self, mask: &[bool]) -> Result<Self> {
        check_mask_len("depth map", self.values.len(), mask.len())?;
        self.mask = mask.to_vec();
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Ground-truth depth in meters; masked-out pixels carry no supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthDepth {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl GroundTruthDepth {
    pub fn new(values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        check_mask_len("ground truth", values.len(), mask.len())?;
        Ok(GroundTruthDepth { values, mask })
    }

    pub fn dense(values: Vec<f64>) -> Self {
        let mask = vec![true; values.len()];
        GroundTruthDepth { values, mask }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Rejects masked-in values that are not finite and positive.
    pub fn validate_positive(&self) -> Result<()> {
        for (index, (&value, &m)) in self.values.iter().zip(&self.mask).enumerate() {
            if m && !(value.is_finite() && value > 0.0) {
                return Err(CarError::NonPositiveDepth { index, value });
            }
        }
        Ok(())
    }
}

impl From<GroundTruthDepth> for DepthMap {
    fn from(gt: GroundTruthDepth) -> Self {
        DepthMap {
            values: gt.values,
            mask: gt.mask,
        }
    }
}

impl From<DepthMap> for GroundTruthDepth {
    fn from(d: DepthMap) -> Self {
        GroundTruthDepth {
            values: d.values,
            mask: d.mask,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_shape_is_checked() {
        assert!(Matrix::new(2, 3, vec![0.0; 5]).is_err());
        let m = Matrix::new(2, 3, (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0, 5.0]);
        assert_eq!(m.iter_rows().count(), 2);
    }

    #[test]
    fn softmax_rows_must_sum_to_one() {
        assert!(ProbMap::softmax_rows(&[vec![0.5, 0.5]]).is_ok());
        assert!(ProbMap::softmax_rows(&[vec![0.5, 0.6]]).is_err());
        assert!(ProbMap::softmax_rows(&[vec![1.5, -0.5]]).is_err());
        assert!(ProbMap::sigmoid_rows(&[vec![0.9, 0.6]]).is_ok());
        assert!(ProbMap::sigmoid_rows(&[vec![1.1, 0.0]]).is_err());
    }

    #[test]
    fn zero_column_matrix_has_rows() {
        let m = Matrix::zeros(3, 0);
        assert_eq!(m.rows(), 3);
    }
}
