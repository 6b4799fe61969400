//! Depth tables: the ordered class representatives of the discretization.
//!
//! A [`TableSpace::LogCenters`] table holds the centers of `K` equal-width
//! intervals of `[log a, log b]`; its values are log-depths. A
//! [`TableSpace::LinearAdaptive`] table holds metric depths obtained from a
//! cumulative sum of normalized bin widths.

use serde::{Deserialize, Serialize};

use crate::error::{CarError, Result};

/// Minimum and maximum depth of the dataset, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub a: f64,
    pub b: f64,
}

impl DepthRange {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(CarError::BadRange { a, b });
        }
        Ok(DepthRange { a, b })
    }

    #[inline]
    pub fn clamp(&self, d: f64) -> f64 {
        d.clamp(self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableSpace {
    LogCenters,
    LinearAdaptive,
}

impl TableSpace {
    pub fn name(self) -> &'static str {
        match self {
            TableSpace::LogCenters => "log_centers",
            TableSpace::LinearAdaptive => "linear_adaptive",
        }
    }
}

/// How a depth is mapped to a class of a log table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    /// `round(log(d/a)/q)`, half away from zero: the index of the nearest bin edge.
    #[default]
    Nearest,
    /// `floor(log(d/a)/q)`: the interval that contains `d`.
    Floor,
}

/// Nonnegative bin widths summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthVector {
    widths: Vec<f64>,
}

/// Default additive floor used by [`normalize_widths`].
pub const DEFAULT_WIDTH_EPS: f64 = 1e-3;

impl WidthVector {
    pub fn new(widths: Vec<f64>) -> Result<Self> {
        if widths.is_empty() {
            return Err(CarError::ZeroBins);
        }
        if widths.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CarError::InvalidWidths(
                "widths must be finite and nonnegative".into(),
            ));
        }
        let s: f64 = widths.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(CarError::InvalidWidths(format!("widths sum to {s}, expected 1")));
        }
        Ok(WidthVector { widths })
    }

    /// Equal widths `1/k`.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(CarError::ZeroBins);
        }
        Ok(WidthVector {
            widths: vec![1.0 / k as f64; k],
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.widths
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }
}

/// `(max(raw, 0) + eps) / Σ (max(raw, 0) + eps)`.
pub fn normalize_widths(raw: &[f64], eps: f64) -> Result<WidthVector> {
    if raw.is_empty() {
        return Err(CarError::ZeroBins);
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(CarError::InvalidWidths(format!("eps must be finite and >= 0, got {eps}")));
    }
    if raw.iter().any(|r| r.is_nan() || r.is_infinite()) {
        return Err(CarError::NonFinite("raw widths"));
    }
    let floored: Vec<f64> = raw.iter().map(|&r| r.max(0.0) + eps).collect();
    let total: f64 = floored.iter().sum();
    if total <= 0.0 {
        return Err(CarError::DegenerateWidths);
    }
    let mut widths: Vec<f64> = floored.iter().map(|w| w / total).collect();
    // second pass absorbs the rounding left by the first division
    let s: f64 = widths.iter().sum();
    for w in &mut widths {
        *w /= s;
    }
    Ok(WidthVector { widths })
}

/// An immutable discretization table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableDoc", into = "TableDoc")]
pub struct DepthTable {
    space: TableSpace,
    values: Vec<f64>,
    range: DepthRange,
    q: Option<f64>,
}

/// Uniform log-space table: `values[p] = log a + (p + 0.5) q`, `q = (log b - log a) / k`.
pub fn make_uniform_log_table(range: DepthRange, k: usize) -> Result<DepthTable> {
    if range.a <= 0.0 {
        return Err(CarError::NonPositiveMin { a: range.a });
    }
    let range = DepthRange::new(range.a, range.b)?;
    if k == 0 {
        return Err(CarError::ZeroBins);
    }
    let log_a = range.a.ln();
    let q = (range.b.ln() - log_a) / k as f64;
    let values = (0..k).map(|p| log_a + (p as f64 + 0.5) * q).collect();
    Ok(DepthTable {
        space: TableSpace::LogCenters,
        values,
        range,
        q: Some(q),
    })
}

/// Adaptive table: `values[p] = a + (b - a) Σ_{s<=p} widths[s]`.
///
/// Zero widths are rejected since they would repeat a table value.
pub fn make_adaptive_table(range: DepthRange, widths: &WidthVector) -> Result<DepthTable> {
    let range = DepthRange::new(range.a, range.b)?;
    if widths.as_slice().iter().any(|&w| w <= 0.0) {
        return Err(CarError::InvalidWidths(
            "every width must be > 0 for a strictly increasing table".into(),
        ));
    }
    let span = range.b - range.a;
    let mut cum = 0.0;
    let mut values = Vec::with_capacity(widths.len());
    for &w in widths.as_slice() {
        cum += w;
        values.push((range.a + span * cum).min(range.b));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CarError::InvalidWidths(
            "widths too small to give distinct table values".into(),
        ));
    }
    Ok(DepthTable {
        space: TableSpace::LinearAdaptive,
        values,
        range,
        q: None,
    })
}

impl DepthTable {
    pub fn space(&self) -> TableSpace {
        self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn range(&self) -> DepthRange {
        self.range
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// Log-space bin width; `None` for adaptive tables.
    pub fn q(&self) -> Option<f64> {
        self.q
    }

    pub(crate) fn require(&self, space: TableSpace) -> Result<()> {
        if self.space != space {
            return Err(CarError::WrongTableSpace {
                expected: space.name(),
                found: self.space.name(),
            });
        }
        Ok(())
    }

    /// `(log a, q)` of a log table.
    pub(crate) fn log_params(&self) -> Result<(f64, f64)> {
        self.require(TableSpace::LogCenters)?;
        // q is always set for log tables
        Ok((self.range.a.ln(), self.q.unwrap_or(f64::NAN)))
    }

    /// Table values in meters: `exp(values)` for log tables, the values themselves otherwise.
    pub fn depths(&self) -> Vec<f64> {
        match self.space {
            TableSpace::LogCenters => self.values.iter().map(|v| v.exp()).collect(),
            TableSpace::LinearAdaptive => self.values.clone(),
        }
    }

    /// Class of depth `d` under the nearest-edge rule.
    pub fn class_index(&self, d: f64) -> Result<usize> {
        self.class_index_with(d, IndexMode::Nearest)
    }

    /// Class of depth `d`. Depths are clamped to `[a, b]`, the result to `[0, K-1]`.
    pub fn class_index_with(&self, d: f64, mode: IndexMode) -> Result<usize> {
        let (_, q) = self.log_params()?;
        if !(d.is_finite() && d > 0.0) {
            return Err(CarError::NonPositiveDepth { index: 0, value: d });
        }
        let t = (self.range.clamp(d) / self.range.a).ln() / q;
        let raw = match mode {
            IndexMode::Nearest => t.round(),
            IndexMode::Floor => t.floor(),
        };
        Ok((raw.max(0.0) as usize).min(self.k() - 1))
    }

    fn validate(&self) -> Result<()> {
        let k = self.values.len();
        if k == 0 {
            return Err(CarError::ZeroBins);
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(CarError::NonFinite("table values"));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CarError::Malformed("table values must be strictly increasing".into()));
        }
        match self.space {
            TableSpace::LogCenters => {
                if self.range.a <= 0.0 {
                    return Err(CarError::NonPositiveMin { a: self.range.a });
                }
                let q = self
                    .q
                    .ok_or_else(|| CarError::Malformed("log table without q".into()))?;
                let expected = (self.range.b.ln() - self.range.a.ln()) / k as f64;
                if (q - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                    return Err(CarError::Malformed(format!(
                        "q = {q} does not match (log b - log a)/k = {expected}"
                    )));
                }
                let log_a = self.range.a.ln();
                for (p, &v) in self.values.iter().enumerate() {
                    let c = log_a + (p as f64 + 0.5) * q;
                    if (v - c).abs() > 1e-9 * c.abs().max(1.0) {
                        return Err(CarError::Malformed(format!(
                            "value {p} = {v} is not the bin center {c}"
                        )));
                    }
                }
            }
            TableSpace::LinearAdaptive => {
                let tol = 1e-9 * self.range.b.abs().max(1.0);
                if self.values[0] < self.range.a - tol || self.values[k - 1] > self.range.b + tol {
                    return Err(CarError::Malformed("adaptive values outside [a, b]".into()));
                }
                if (self.values[k - 1] - self.range.b).abs() > tol {
                    return Err(CarError::Malformed("last adaptive value must equal b".into()));
                }
            }
        }
        Ok(())
    }
}

/// JSON layout `{space, a, b, k, q?, values}`.
#[derive(Serialize, Deserialize)]
struct TableDoc {
    space: TableSpace,
    a: f64,
    b: f64,
    k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    values: Vec<f64>,
}

impl From<DepthTable> for TableDoc {
    fn from(t: DepthTable) -> Self {
        TableDoc {
            space: t.space,
            a: t.range.a,
            b: t.range.b,
            k: t.values.len(),
            q: t.q,
            values: t.values,
        }
    }
}

impl TryFrom<TableDoc> for DepthTable {
    type Error = CarError;

    fn try_from(doc: TableDoc) -> Result<Self> {
        if doc.k != doc.values.len() {
            return Err(CarError::shape("table", doc.k, doc.values.len()));
        }
        let table = DepthTable {
            space: doc.space,
            range: DepthRange::new(doc.a, doc.b)?,
            q: match doc.space {
                TableSpace::LogCenters => doc.q,
                TableSpace::LinearAdaptive => None,
            },
            values: doc.values,
        };
        table.validate()?;
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::E;

    fn setup_t() -> DepthTable {
        make_uniform_log_table(DepthRange::new(1.0, E).unwrap(), 2).unwrap()
    }

    #[test]
    fn uniform_log_table_closed_forms() {
        let t = setup_t();
        assert_abs_diff_eq!(t.q().unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.values()[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(t.values()[1], 0.75, epsilon = 1e-15);

        let s = make_uniform_log_table(DepthRange::new(1.0, E * E).unwrap(), 4).unwrap();
        for (v, e) in s.values().iter().zip([0.25, 0.75, 1.25, 1.75]) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn kitti_like_table() {
        // q = (ln 80 - ln 0.5)/80, evaluated independently
        let t = make_uniform_log_table(DepthRange::new(0.5, 80.0).unwrap(), 80).unwrap();
        assert_abs_diff_eq!(t.q().unwrap(), 0.063_439_672_690_422_83, epsilon = 1e-15);
        assert_abs_diff_eq!(t.values()[0], -0.661_427_344_214_733_8, epsilon = 1e-15);
    }

    #[test]
    fn log_table_errors() {
        assert!(matches!(
            make_uniform_log_table(DepthRange { a: 0.0, b: 1.0 }, 2),
            Err(CarError::NonPositiveMin { .. })
        ));
        assert!(matches!(
            make_uniform_log_table(DepthRange { a: 2.0, b: 1.0 }, 2),
            Err(CarError::BadRange { .. })
        ));
        assert!(matches!(
            make_uniform_log_table(DepthRange { a: 1.0, b: 2.0 }, 0),
            Err(CarError::ZeroBins)
        ));
    }

    #[test]
    fn normalize_widths_examples() {
        let w = normalize_widths(&[1.0, 1.0, 1.0, 1.0], 0.0).unwrap();
        assert_eq!(w.as_slice(), &[0.25; 4]);
        let w = normalize_widths(&[0.0, 0.0], 0.5).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
        let w = normalize_widths(&[3.0, 1.0], 0.0).unwrap();
        assert_abs_diff_eq!(w.as_slice()[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(w.as_slice()[1], 0.25, epsilon = 1e-15);
        assert!(matches!(
            normalize_widths(&[-1.0, 0.0], 0.0),
            Err(CarError::DegenerateWidths)
        ));
    }

    #[test]
    fn adaptive_table_examples() {
        let w = WidthVector::uniform(4).unwrap();
        let t = make_adaptive_table(DepthRange::new(0.0, 80.0).unwrap(), &w).unwrap();
        assert_eq!(t.values(), &[20.0, 40.0, 60.0, 80.0]);

        let t = make_adaptive_table(
            DepthRange::new(0.0, 1.0).unwrap(),
            &WidthVector::new(vec![1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(t.values(), &[1.0]);

        let t = make_adaptive_table(
            DepthRange::new(10.0, 20.0).unwrap(),
            &WidthVector::new(vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        assert_eq!(t.values(), &[15.0, 20.0]);
        assert!(t.class_index(12.0).is_err());
    }

    #[test]
    fn class_index_examples() {
        let t = setup_t();
        assert_eq!(t.class_index(0.6f64.exp()).unwrap(), 1);
        assert_eq!(t.class_index(1.0).unwrap(), 0);
        assert_eq!(t.class_index(E).unwrap(), 1);
        assert!(matches!(
            t.class_index(0.0),
            Err(CarError::NonPositiveDepth { .. })
        ));
        assert!(t.class_index(-1.0).is_err());
        // outside the range is clamped
        assert_eq!(t.class_index(1e-3).unwrap(), 0);
        assert_eq!(t.class_index(1e3).unwrap(), 1);
    }

    #[test]
    fn floor_mode_uses_containing_interval() {
        let t = setup_t();
        // log d = 0.4 lies in [0, 0.5) but rounds to edge 1
        assert_eq!(t.class_index_with(0.4f64.exp(), IndexMode::Floor).unwrap(), 0);
        assert_eq!(t.class_index_with(0.4f64.exp(), IndexMode::Nearest).unwrap(), 1);
    }

    #[test]
    fn json_rejects_inconsistent_tables() {
        let bad = r#"{"space":"log_centers","a":1.0,"b":2.718281828459045,"k":2,"q":0.5,"values":[0.25,0.8]}"#;
        assert!(serde_json::from_str::<DepthTable>(bad).is_err());
        let bad_k = r#"{"space":"linear_adaptive","a":0.0,"b":1.0,"k":2,"values":[1.0]}"#;
        assert!(serde_json::from_str::<DepthTable>(bad_k).is_err());
        let ok = serde_json::to_string(&setup_t()).unwrap();
        assert!(ok.contains("\"space\":\"log_centers\""));
        assert_eq!(serde_json::from_str::<DepthTable>(&ok).unwrap(), setup_t());
    }
}
