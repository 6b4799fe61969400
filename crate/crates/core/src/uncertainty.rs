//! Per-pixel uncertainty scores.

use serde::{Deserialize, Serialize};

use crate::array::{DepthMap, ProbMap, ProbSemantics};
use crate::error::{CarError, Result};
use crate::tables::{DepthTable, TableSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMethod {
    SEntr,
    OneMinusMcp,
    EDist,
    EDistAdaptive,
    EDistOrdinal,
    EnsembleVariance,
}

impl UncertaintyMethod {
    pub fn name(self) -> &'static str {
        match self {
            UncertaintyMethod::SEntr => "s_entr",
            UncertaintyMethod::OneMinusMcp => "one_minus_mcp",
            UncertaintyMethod::EDist => "e_dist",
            UncertaintyMethod::EDistAdaptive => "e_dist_adaptive",
            UncertaintyMethod::EDistOrdinal => "e_dist_ordinal",
            UncertaintyMethod::EnsembleVariance => "ensemble_variance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "s_entr" | "s-entr" | "entropy" => UncertaintyMethod::SEntr,
            "one_minus_mcp" | "1-mcp" | "mcp" => UncertaintyMethod::OneMinusMcp,
            "e_dist" | "e-dist" => UncertaintyMethod::EDist,
            "e_dist_adaptive" | "e-dist-adaptive" => UncertaintyMethod::EDistAdaptive,
            "e_dist_ordinal" | "e-dist-ordinal" => UncertaintyMethod::EDistOrdinal,
            "ensemble_variance" | "variance" => UncertaintyMethod::EnsembleVariance,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub values: Vec<f64>,
    pub method: UncertaintyMethod,
}

impl UncertaintyMap {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Prefix labels used to re-discretize an ordinal decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReencodeMode {
    /// `y'_p = 1{p < c}`
    #[default]
    Strict,
    /// `y'_p = 1{p <= c}`
    Literal,
}

fn map_rows(probs: &ProbMap, method: UncertaintyMethod, f: impl Fn(&[f64]) -> f64) -> UncertaintyMap {
    UncertaintyMap {
        values: probs.matrix().iter_rows().map(f).collect(),
        method,
    }
}

fn check_decoded(probs: &ProbMap, decoded: &DepthMap) -> Result<()> {
    if decoded.len() != probs.n() {
        return Err(CarError::shape("decoded depth", probs.n(), decoded.len()));
    }
    Ok(())
}

fn check_k(table: &DepthTable, probs: &ProbMap) -> Result<()> {
    if probs.k() != table.k() {
        return Err(CarError::shape("probabilities", table.k(), probs.k()));
    }
    Ok(())
}

/// `-Σ ŷ log ŷ` in nats, with `0 log 0 = 0`.
pub fn shannon_entropy(probs: &ProbMap) -> Result<UncertaintyMap> {
    probs.require(ProbSemantics::Softmax)?;
    Ok(map_rows(probs, UncertaintyMethod::SEntr, |r| {
        let h: f64 = r.iter().filter(|&&y| y > 0.0).map(|&y| -y * y.ln()).sum();
        h.max(0.0)
    }))
}

pub fn one_minus_mcp(probs: &ProbMap) -> Result<UncertaintyMap> {
    probs.require(ProbSemantics::Softmax)?;
    Ok(map_rows(probs, UncertaintyMethod::OneMinusMcp, |r| {
        (1.0 - r.iter().copied().fold(0.0, f64::max)).max(0.0)
    }))
}

fn weighted_sq_dist(row: &[f64], centers: &[f64], d: f64) -> f64 {
    row.iter().zip(centers).map(|(y, c)| y * (c - d) * (c - d)).sum()
}

/// `Σ ŷ_p (exp(values[p]) - d̂)²` for log tables.
pub fn e_dist(table: &DepthTable, probs: &ProbMap, decoded: &DepthMap) -> Result<UncertaintyMap> {
    table.require(TableSpace::LogCenters)?;
    probs.require(ProbSemantics::Softmax)?;
    check_k(table, probs)?;
    check_decoded(probs, decoded)?;
    let centers = table.depths();
    Ok(UncertaintyMap {
        values: probs
            .matrix()
            .iter_rows()
            .zip(&decoded.values)
            .map(|(r, &d)| weighted_sq_dist(r, &centers, d))
            .collect(),
        method: UncertaintyMethod::EDist,
    })
}

/// `Σ ŷ_p (values[p] - d̂)²` for adaptive tables (already in meters).
pub fn e_dist_adaptive(table: &DepthTable, probs: &ProbMap, decoded: &DepthMap) -> Result<UncertaintyMap> {
    table.require(TableSpace::LinearAdaptive)?;
    probs.require(ProbSemantics::Softmax)?;
    check_k(table, probs)?;
    check_decoded(probs, decoded)?;
    Ok(UncertaintyMap {
        values: probs
            .matrix()
            .iter_rows()
            .zip(&decoded.values)
            .map(|(r, &d)| weighted_sq_dist(r, table.values(), d))
            .collect(),
        method: UncertaintyMethod::EDistAdaptive,
    })
}

pub fn e_dist_ordinal(table: &DepthTable, probs: &ProbMap, decoded: &DepthMap) -> Result<UncertaintyMap> {
    e_dist_ordinal_with(table, probs, decoded, ReencodeMode::Strict)
}

/// Ordinal E-Dist: the decoded depth is turned back into its count `c`
/// (`d̂ = exp(log a + q (c + 0.5))`), re-encoded as prefix labels `y'`, and
/// `Σ exp(values[p]) (y'_p - ŷ_p)²` is taken over classes with `ŷ_p >= 0.5`.
pub fn e_dist_ordinal_with(
    table: &DepthTable,
    probs: &ProbMap,
    decoded: &DepthMap,
    mode: ReencodeMode,
) -> Result<UncertaintyMap> {
    let (log_a, q) = table.log_params()?;
    probs.require(ProbSemantics::PerClassSigmoid)?;
    check_k(table, probs)?;
    check_decoded(probs, decoded)?;
    let centers = table.depths();
    let mut values = Vec::with_capacity(probs.n());
    for (j, (r, &d)) in probs.matrix().iter_rows().zip(&decoded.values).enumerate() {
        if d <= 0.0 || !d.is_finite() {
            if !decoded.mask[j] {
                values.push(0.0);
                continue;
            }
            return Err(CarError::NonPositiveDepth { index: j, value: d });
        }
        let c = ((d.ln() - log_a) / q - 0.5).round().max(0.0) as usize;
        let u = r
            .iter()
            .zip(&centers)
            .enumerate()
            .filter(|(_, (&y, _))| y >= 0.5)
            .map(|(p, (&y, &e))| {
                let target = match mode {
                    ReencodeMode::Strict => p < c,
                    ReencodeMode::Literal => p <= c,
                };
                let t = if target { 1.0 } else { 0.0 };
                e * (t - y) * (t - y)
            })
            .sum();
        values.push(u);
    }
    Ok(UncertaintyMap {
        values,
        method: UncertaintyMethod::EDistOrdinal,
    })
}

/// Population variance across `maps` at each pixel. Masked pixels score 0.
pub fn ensemble_variance(maps: &[DepthMap]) -> Result<UncertaintyMap> {
    if maps.len() < 2 {
        return Err(CarError::TooFewMembers(maps.len()));
    }
    let first = &maps[0];
    for m in &maps[1..] {
        if m.len() != first.len() {
            return Err(CarError::shape("ensemble member", first.len(), m.len()));
        }
        if m.mask != first.mask {
            return Err(CarError::MaskMismatch);
        }
    }
    let count = maps.len() as f64;
    let values = (0..first.len())
        .map(|j| {
            if !first.mask[j] {
                return 0.0;
            }
            let mean = maps.iter().map(|m| m.values[j]).sum::<f64>() / count;
            maps.iter().map(|m| (m.values[j] - mean).powi(2)).sum::<f64>() / count
        })
        .collect();
    Ok(UncertaintyMap {
        values,
        method: UncertaintyMethod::EnsembleVariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::{decode_adaptive, decode_argmax, decode_ordinal, decode_soft_weighted};
    use crate::tables::{make_adaptive_table, make_uniform_log_table, DepthRange, WidthVector};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::E;

    fn setup_t() -> DepthTable {
        make_uniform_log_table(DepthRange::new(1.0, E).unwrap(), 2).unwrap()
    }

    #[test]
    fn entropy_and_mcp() {
        let p = ProbMap::softmax_rows(&[vec![0.25; 4], vec![0.0, 1.0, 0.0, 0.0], vec![0.5, 0.5, 0.0, 0.0]]).unwrap();
        let h = shannon_entropy(&p).unwrap();
        assert_abs_diff_eq!(h.values[0], 4f64.ln(), epsilon = 1e-12);
        assert_eq!(h.values[1], 0.0);
        assert_abs_diff_eq!(h.values[2], 2f64.ln(), epsilon = 1e-12);
        let m = one_minus_mcp(&p).unwrap();
        assert_abs_diff_eq!(m.values[0], 0.75, epsilon = 1e-12);
        assert_eq!(m.values[1], 0.0);
        let p2 = ProbMap::softmax_rows(&[vec![0.3, 0.7]]).unwrap();
        assert_abs_diff_eq!(one_minus_mcp(&p2).unwrap().values[0], 0.3, epsilon = 1e-12);
        let s = ProbMap::sigmoid_rows(&[vec![0.3, 0.7]]).unwrap();
        assert!(matches!(shannon_entropy(&s), Err(CarError::SemanticsMismatch { .. })));
    }

    #[test]
    fn e_dist_examples() {
        let t = setup_t();
        let p = ProbMap::softmax_rows(&[vec![0.5, 0.5]]).unwrap();
        let soft = decode_soft_weighted(&t, &p).unwrap();
        assert_abs_diff_eq!(e_dist(&t, &p, &soft).unwrap().values[0], 0.176_144_024_903_625_74, epsilon = 1e-12);
        let arg = decode_argmax(&t, &p).unwrap();
        assert_abs_diff_eq!(e_dist(&t, &p, &arg).unwrap().values[0], 0.346_923_342_060_051_43, epsilon = 1e-12);
        let one = ProbMap::softmax_rows(&[vec![0.0, 1.0]]).unwrap();
        let d = decode_argmax(&t, &one).unwrap();
        assert_abs_diff_eq!(e_dist(&t, &one, &d).unwrap().values[0], 0.0, epsilon = 1e-24);
        assert!(matches!(
            e_dist(&t, &p, &DepthMap::dense(vec![1.0, 2.0])),
            Err(CarError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn e_dist_is_a_parabola_in_the_decoded_value() {
        let t = make_uniform_log_table(DepthRange::new(1.0, 80.0).unwrap(), 6).unwrap();
        let row = vec![0.1, 0.3, 0.05, 0.25, 0.2, 0.1];
        let p = ProbMap::softmax_rows(std::slice::from_ref(&row)).unwrap();
        let mean: f64 = row.iter().zip(t.depths()).map(|(y, c)| y * c).sum();
        let at = |d: f64| e_dist(&t, &p, &DepthMap::dense(vec![d])).unwrap().values[0];
        let best = at(mean);
        for delta in [-3.0, -0.5, -1e-3, 1e-3, 0.5, 3.0] {
            let v = at(mean + delta);
            assert!(v > best);
            assert_abs_diff_eq!(v - best, delta * delta, epsilon = 1e-9);
        }
    }

    #[test]
    fn entropy_is_permutation_invariant_e_dist_is_not() {
        let t = make_uniform_log_table(DepthRange::new(1.0, 80.0).unwrap(), 4).unwrap();
        let a = ProbMap::softmax_rows(&[vec![0.7, 0.2, 0.1, 0.0]]).unwrap();
        let b = ProbMap::softmax_rows(&[vec![0.7, 0.0, 0.1, 0.2]]).unwrap();
        assert_abs_diff_eq!(
            shannon_entropy(&a).unwrap().values[0],
            shannon_entropy(&b).unwrap().values[0],
            epsilon = 1e-15
        );
        assert_eq!(one_minus_mcp(&a).unwrap().values, one_minus_mcp(&b).unwrap().values);
        let ea = e_dist(&t, &a, &decode_argmax(&t, &a).unwrap()).unwrap().values[0];
        let eb = e_dist(&t, &b, &decode_argmax(&t, &b).unwrap()).unwrap().values[0];
        assert!((ea - eb).abs() > 1.0);
    }

    #[test]
    fn adaptive_examples() {
        let t = make_adaptive_table(DepthRange::new(0.0, 80.0).unwrap(), &WidthVector::uniform(4).unwrap()).unwrap();
        let p = ProbMap::softmax_rows(&[vec![0.25; 4], vec![0.0, 0.0, 1.0, 0.0]]).unwrap();
        let d = decode_adaptive(&t, &p).unwrap();
        let u = e_dist_adaptive(&t, &p, &d).unwrap();
        assert_abs_diff_eq!(u.values[0], 500.0, epsilon = 1e-9);
        assert_eq!(u.values[1], 0.0);
        let t2 = make_adaptive_table(DepthRange::new(0.0, 40.0).unwrap(), &WidthVector::uniform(2).unwrap()).unwrap();
        let p2 = ProbMap::softmax_rows(&[vec![0.5, 0.5]]).unwrap();
        let u2 = e_dist_adaptive(&t2, &p2, &DepthMap::dense(vec![30.0])).unwrap();
        assert_abs_diff_eq!(u2.values[0], 100.0, epsilon = 1e-9);
    }

    #[test]
    fn ordinal_examples() {
        let t = setup_t();
        let p = ProbMap::sigmoid_rows(&[vec![0.9, 0.2], vec![0.5, 0.2], vec![1.0, 0.0]]).unwrap();
        let d = decode_ordinal(&t, &p).unwrap();
        let u = e_dist_ordinal(&t, &p, &d).unwrap();
        assert_abs_diff_eq!(u.values[0], 0.012_840_254_166_877_414, epsilon = 1e-12);
        assert_abs_diff_eq!(u.values[1], 0.321_006_354_171_935_35, epsilon = 1e-12);
        assert_eq!(u.values[2], 0.0);
    }

    #[test]
    fn ensemble_examples() {
        let a = DepthMap::dense(vec![2.0, 1.0]);
        let b = DepthMap::dense(vec![4.0, 1.0]);
        let u = ensemble_variance(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(u.values, vec![1.0, 0.0]);
        let three = ensemble_variance(&[
            DepthMap::dense(vec![1.0]),
            DepthMap::dense(vec![2.0]),
            DepthMap::dense(vec![3.0]),
        ])
        .unwrap();
        assert_abs_diff_eq!(three.values[0], 2.0 / 3.0, epsilon = 1e-15);
        assert!(matches!(ensemble_variance(std::slice::from_ref(&a)), Err(CarError::TooFewMembers(1))));
        let masked = DepthMap::new(vec![2.0, 1.0], vec![true, false]).unwrap();
        assert!(matches!(ensemble_variance(&[a, masked]), Err(CarError::MaskMismatch)));
    }

    #[test]
    fn all_scores_vanish_on_one_hot_argmax() {
        let t = make_uniform_log_table(DepthRange::new(1.0, 80.0).unwrap(), 5).unwrap();
        let p = ProbMap::softmax_rows(&[vec![0.0, 0.0, 1.0, 0.0, 0.0]]).unwrap();
        let d = decode_argmax(&t, &p).unwrap();
        assert_eq!(shannon_entropy(&p).unwrap().values[0], 0.0);
        assert_eq!(one_minus_mcp(&p).unwrap().values[0], 0.0);
        assert!(e_dist(&t, &p, &d).unwrap().values[0] < 1e-20);
    }
}
