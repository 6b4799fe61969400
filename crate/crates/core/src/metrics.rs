//! Depth accuracy metrics, sparsification curves and AUSE.

use serde::{Deserialize, Serialize};

use crate::array::{DepthMap, GroundTruthDepth};
use crate::error::{CarError, Result};
use crate::reduce::chunked_sum;
use crate::uncertainty::UncertaintyMap;

pub const DEFAULT_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub rmse: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse_log: f64,
    pub log10: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_valid: usize,
}

impl DepthMetrics {
    pub const CSV_HEADER: &'static str = "rmse,abs_rel,sq_rel,rmse_log,log10,delta1,delta2,delta3,n_valid";

    /// Full-precision CSV row matching [`DepthMetrics::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.rmse,
            self.abs_rel,
            self.sq_rel,
            self.rmse_log,
            self.log10,
            self.delta1,
            self.delta2,
            self.delta3,
            self.n_valid
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Rmse,
    AbsRel,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Rmse => "rmse",
            MetricKind::AbsRel => "abs_rel",
        }
    }
}

/// Indices valid in `gt`, checking that `pred` covers them with positive finite values.
fn valid_pixels(pred: &DepthMap, gt: &GroundTruthDepth) -> Result<Vec<usize>> {
    if pred.len() != gt.len() {
        return Err(CarError::shape("prediction", gt.len(), pred.len()));
    }
    let mut idx = Vec::with_capacity(gt.len());
    for j in 0..gt.len() {
        if !gt.mask[j] {
            continue;
        }
        if !pred.mask[j] {
            return Err(CarError::MaskMismatch);
        }
        for v in [pred.values[j], gt.values[j]] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CarError::NonPositiveDepth { index: j, value: v });
            }
        }
        idx.push(j);
    }
    if idx.is_empty() {
        return Err(CarError::EmptyMask);
    }
    Ok(idx)
}

pub fn depth_metrics(pred: &DepthMap, gt: &GroundTruthDepth) -> Result<DepthMetrics> {
    let idx = valid_pixels(pred, gt)?;
    let n = idx.len() as f64;
    let mean = |f: &dyn Fn(f64, f64) -> f64| {
        let terms: Vec<f64> = idx.iter().map(|&j| f(pred.values[j], gt.values[j])).collect();
        chunked_sum(&terms) / n
    };
    let inliers = |t: f64| idx.iter().filter(|&&j| (pred.values[j] / gt.values[j]).max(gt.values[j] / pred.values[j]) < t).count() as f64 / n;
    Ok(DepthMetrics {
        rmse: mean(&|p, g| (p - g) * (p - g)).sqrt(),
        abs_rel: mean(&|p, g| (p - g).abs() / g),
        sq_rel: mean(&|p, g| (p - g) * (p - g) / g),
        rmse_log: mean(&|p, g| (p.ln() - g.ln()).powi(2)).sqrt(),
        log10: mean(&|p, g| (p.log10() - g.log10()).abs()),
        delta1: inliers(1.25),
        delta2: inliers(1.25f64.powi(2)),
        delta3: inliers(1.25f64.powi(3)),
        n_valid: idx.len(),
    })
}

/// Per-pixel error over the pixels valid in `gt`, in index order.
///
/// Absolute error for RMSE, relative error for AbsRel.
pub fn oracle_ranking(pred: &DepthMap, gt: &GroundTruthDepth, kind: MetricKind) -> Result<Vec<f64>> {
    let idx = valid_pixels(pred, gt)?;
    Ok(idx
        .iter()
        .map(|&j| {
            let e = (pred.values[j] - gt.values[j]).abs();
            match kind {
                MetricKind::Rmse => e,
                MetricKind::AbsRel => e / gt.values[j],
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsificationCurve {
    pub fractions: Vec<f64>,
    pub metric_values: Vec<f64>,
    pub metric_kind: MetricKind,
}

impl SparsificationCurve {
    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    /// Two-column `fraction,value` CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fraction,value\n");
        for (f, v) in self.fractions.iter().zip(&self.metric_values) {
            s.push_str(&format!("{f},{v}\n"));
        }
        s
    }
}

/// `0, step, 2 step, ...` strictly below 1.
pub fn fraction_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(CarError::InvalidStep(step));
    }
    Ok((0..)
        .map(|i| i as f64 * step)
        .take_while(|&f| f < 1.0 - 1e-9)
        .collect())
}

/// Number of pixels removed at fraction `f`: `round(f N)`, kept below `N` so
/// at least one pixel remains.
pub fn removal_count(f: f64, n: usize) -> usize {
    ((f * n as f64).round() as usize).min(n - 1)
}

/// Pixel indices in removal order: descending ranking, ties by ascending index.
pub fn removal_order(ranking: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ranking.len()).collect();
    order.sort_by(|&i, &j| ranking[j].total_cmp(&ranking[i]).then(i.cmp(&j)));
    order
}

fn curve_metric(errors: &[f64], kept: &[bool], kind: MetricKind) -> f64 {
    let terms: Vec<f64> = errors
        .iter()
        .zip(kept)
        .filter(|(_, &k)| k)
        .map(|(&e, _)| match kind {
            MetricKind::Rmse => e * e,
            MetricKind::AbsRel => e,
        })
        .collect();
    let mean = chunked_sum(&terms) / terms.len() as f64;
    match kind {
        MetricKind::Rmse => mean.sqrt(),
        MetricKind::AbsRel => mean,
    }
}

/// Metric on the remaining pixels as the highest-ranked ones are removed.
///
/// `errors` are per-pixel errors of the chosen metric (see [`oracle_ranking`]);
/// the curve is `sqrt(mean e²)` for RMSE and `mean e` for AbsRel.
pub fn sparsification_curve(errors: &[f64], ranking: &[f64], kind: MetricKind, step: f64) -> Result<SparsificationCurve> {
    if errors.len() != ranking.len() {
        return Err(CarError::shape("ranking", errors.len(), ranking.len()));
    }
    if errors.is_empty() {
        return Err(CarError::EmptyMask);
    }
    if errors.iter().chain(ranking).any(|v| !v.is_finite()) {
        return Err(CarError::NonFinite("sparsification input"));
    }
    let fractions = fraction_grid(step)?;
    let n = errors.len();
    let order = removal_order(ranking);
    let mut kept = vec![true; n];
    let mut removed = 0;
    let mut metric_values = Vec::with_capacity(fractions.len());
    for &f in &fractions {
        let m = removal_count(f, n);
        while removed < m {
            kept[order[removed]] = false;
            removed += 1;
        }
        metric_values.push(curve_metric(errors, &kept, kind));
    }
    Ok(SparsificationCurve {
        fractions,
        metric_values,
        metric_kind: kind,
    })
}

/// Both curves behind an AUSE value.
#[derive(Debug, Clone, PartialEq)]
pub struct AuseBreakdown {
    pub ause: f64,
    pub curve: SparsificationCurve,
    pub oracle: SparsificationCurve,
}

pub fn ause_breakdown(
    pred: &DepthMap,
    gt: &GroundTruthDepth,
    uncert: &UncertaintyMap,
    kind: MetricKind,
    step: f64,
) -> Result<AuseBreakdown> {
    if uncert.len() != gt.len() {
        return Err(CarError::shape("uncertainty", gt.len(), uncert.len()));
    }
    let errors = oracle_ranking(pred, gt, kind)?;
    let ranking: Vec<f64> = (0..gt.len()).filter(|&j| gt.mask[j]).map(|j| uncert.values[j]).collect();
    let curve = sparsification_curve(&errors, &ranking, kind, step)?;
    let oracle = sparsification_curve(&errors, &errors, kind, step)?;
    let gaps: Vec<f64> = curve
        .metric_values
        .iter()
        .zip(&oracle.metric_values)
        .map(|(c, o)| c - o)
        .collect();
    Ok(AuseBreakdown {
        ause: chunked_sum(&gaps) / gaps.len() as f64,
        curve,
        oracle,
    })
}

/// Mean gap between the uncertainty-ranked curve and the oracle curve.
pub fn ause(pred: &DepthMap, gt: &GroundTruthDepth, uncert: &UncertaintyMap, kind: MetricKind, step: f64) -> Result<f64> {
    ause_breakdown(pred, gt, uncert, kind, step).map(|b| b.ause)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::UncertaintyMethod;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::E;

    fn umap(values: Vec<f64>) -> UncertaintyMap {
        UncertaintyMap {
            values,
            method: UncertaintyMethod::SEntr,
        }
    }

    /// gt 10 everywhere, abs errors [4,3,2,1].
    fn four_pixels() -> (DepthMap, GroundTruthDepth) {
        (
            DepthMap::dense(vec![14.0, 7.0, 12.0, 9.0]),
            GroundTruthDepth::dense(vec![10.0; 4]),
        )
    }

    #[test]
    fn identity_metrics() {
        let gt = GroundTruthDepth::dense(vec![1.0, 2.0, 3.0]);
        let m = depth_metrics(&DepthMap::dense(gt.values.clone()), &gt).unwrap();
        assert_eq!((m.rmse, m.abs_rel, m.sq_rel, m.rmse_log, m.log10), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!((m.delta1, m.delta2, m.delta3, m.n_valid), (1.0, 1.0, 1.0, 3));
    }

    #[test]
    fn hand_metric_row() {
        let m = depth_metrics(&DepthMap::dense(vec![1.0, 4.8]), &GroundTruthDepth::dense(vec![2.0, 4.0])).unwrap();
        assert_abs_diff_eq!(m.abs_rel, 0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rmse, 0.905_538_513_813_741_6, epsilon = 1e-12);
        assert_abs_diff_eq!(m.sq_rel, 0.33, epsilon = 1e-12);
        assert_eq!(m.delta1, 0.5);
        let l = depth_metrics(&DepthMap::dense(vec![E * E]), &GroundTruthDepth::dense(vec![E])).unwrap();
        assert_abs_diff_eq!(l.rmse_log, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.log10, std::f64::consts::LOG10_E, epsilon = 1e-12);
    }

    #[test]
    fn delta_threshold_is_strict() {
        let m = depth_metrics(&DepthMap::dense(vec![1.25]), &GroundTruthDepth::dense(vec![1.0])).unwrap();
        assert_eq!(m.delta1, 0.0);
        assert_eq!(m.delta2, 1.0);
    }

    #[test]
    fn masked_pixels_are_ignored() {
        let pred = DepthMap::dense(vec![1.0, 4.8, 100.0]);
        let gt = GroundTruthDepth::new(vec![2.0, 4.0, 1.0], vec![true, true, false]).unwrap();
        let m = depth_metrics(&pred, &gt).unwrap();
        assert_eq!(m.n_valid, 2);
        assert_abs_diff_eq!(m.abs_rel, 0.35, epsilon = 1e-12);
        let none = GroundTruthDepth::new(vec![1.0], vec![false]).unwrap();
        assert!(matches!(depth_metrics(&DepthMap::dense(vec![1.0]), &none), Err(CarError::EmptyMask)));
    }

    #[test]
    fn oracle_ranking_examples() {
        let pred = DepthMap::dense(vec![1.0, 4.8]);
        let gt = GroundTruthDepth::dense(vec![2.0, 4.0]);
        let r = oracle_ranking(&pred, &gt, MetricKind::AbsRel).unwrap();
        assert_abs_diff_eq!(r[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], 0.2, epsilon = 1e-12);
        let r = oracle_ranking(&pred, &gt, MetricKind::Rmse).unwrap();
        assert_abs_diff_eq!(r[1], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn oracle_and_anti_oracle_curves() {
        let e = [4.0, 3.0, 2.0, 1.0];
        let c = sparsification_curve(&e, &e, MetricKind::Rmse, 0.25).unwrap();
        assert_eq!(c.fractions, vec![0.0, 0.25, 0.5, 0.75]);
        let want = [2.738_612_787_525_830_6, 2.160_246_899_469_287, 1.581_138_830_084_189_8, 1.0];
        for (a, b) in c.metric_values.iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let neg: Vec<f64> = e.iter().map(|v| -v).collect();
        let anti = sparsification_curve(&e, &neg, MetricKind::Rmse, 0.25).unwrap();
        let want = [2.738_612_787_525_830_6, 3.109_126_351_029_605, 3.535_533_905_932_737_6, 4.0];
        for (a, b) in anti.metric_values.iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(removal_order(&[1.0, 1.0, 2.0, 1.0]), vec![2, 0, 1, 3]);
        let e = [1.0, 2.0, 3.0];
        let c = sparsification_curve(&e, &[0.0; 3], MetricKind::AbsRel, 1.0 / 3.0).unwrap();
        assert_abs_diff_eq!(c.metric_values[1], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c.metric_values[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ause_examples() {
        let (pred, gt) = four_pixels();
        let anti = ause(&pred, &gt, &umap(vec![-4.0, -3.0, -2.0, -1.0]), MetricKind::Rmse, 0.25).unwrap();
        assert_abs_diff_eq!(anti, 1.475_819, epsilon = 1e-6);
        let perfect = ause(&pred, &gt, &umap(vec![40.0, 30.0, 20.0, 10.0]), MetricKind::Rmse, 0.25).unwrap();
        assert_eq!(perfect, 0.0);
    }

    #[test]
    fn ause_is_bounded_over_all_orderings() {
        let (pred, gt) = four_pixels();
        let anti = ause(&pred, &gt, &umap(vec![-4.0, -3.0, -2.0, -1.0]), MetricKind::Rmse, 0.25).unwrap();
        let mut perm = [0.0, 1.0, 2.0, 3.0];
        let mut count = 0;
        permute(&mut perm, 0, &mut |p| {
            let a = ause(&pred, &gt, &umap(p.to_vec()), MetricKind::Rmse, 0.25).unwrap();
            assert!(a >= -1e-12 && a <= anti + 1e-12, "{p:?} -> {a}");
            count += 1;
        });
        assert_eq!(count, 24);
    }

    fn permute(v: &mut [f64; 4], i: usize, f: &mut dyn FnMut(&[f64])) {
        if i == v.len() {
            f(v);
            return;
        }
        for j in i..v.len() {
            v.swap(i, j);
            permute(v, i + 1, f);
            v.swap(i, j);
        }
    }

    #[test]
    fn step_is_validated() {
        for s in [0.0, -0.1, 0.6, f64::NAN] {
            assert!(matches!(fraction_grid(s), Err(CarError::InvalidStep(_))));
        }
        assert_eq!(fraction_grid(0.01).unwrap().len(), 100);
        assert_eq!(fraction_grid(0.5).unwrap(), vec![0.0, 0.5]);
    }

    #[test]
    fn at_least_one_pixel_remains() {
        assert_eq!(removal_count(0.99, 4), 3);
        let c = sparsification_curve(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0], MetricKind::AbsRel, 0.01).unwrap();
        assert_eq!(*c.metric_values.last().unwrap(), 1.0);
    }
}
