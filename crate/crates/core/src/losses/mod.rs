//! CAR losses with analytic gradients.
//!
//! Every loss is the mean of a per-pixel loss over valid pixels; the gradient
//! is taken with respect to the logits (or decoded depths for the
//! scale-invariant loss) and is zero on masked-out rows. Log-probabilities
//! are floored at `ln 1e-12`; a floored term contributes no gradient.

use serde::{Deserialize, Serialize};

use crate::array::{DepthMap, GroundTruthDepth, Matrix, ProbMap, ProbSemantics};
use crate::encode::{LabelKind, LabelMap};
use crate::error::{CarError, Result};
use crate::reduce::chunked_sum;
use crate::tables::{DepthTable, TableSpace};

pub mod gradcheck;

pub use gradcheck::finite_diff_check;

/// Lower bound applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

fn log_floor() -> f64 {
    PROB_FLOOR.ln()
}

/// Default SI-loss scale.
pub const DEFAULT_SI_OMEGA: f64 = 10.0;
/// Default SI-loss variance weight.
pub const DEFAULT_SI_LAMBDA: f64 = 0.85;

/// Scalar loss and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad: Matrix,
}

/// Loss families understood by the gradient checker and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    Wce,
    Mbce,
    Ordinal,
    SmoothL1,
    ScaleInvariant,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Ce,
        LossKind::Wce,
        LossKind::Mbce,
        LossKind::Ordinal,
        LossKind::SmoothL1,
        LossKind::ScaleInvariant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Wce => "wce",
            LossKind::Mbce => "mbce",
            LossKind::Ordinal => "ordinal",
            LossKind::SmoothL1 => "smoothl1",
            LossKind::ScaleInvariant => "si",
        }
    }
}

/// Which class target the smooth-L1 expected index is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothL1Target {
    /// `t = k + 1`, matching the 1-based expected index.
    #[default]
    Corrected,
    /// `t = k` as written; a perfect prediction costs 0.5.
    Literal,
}

impl SmoothL1Target {
    #[inline]
    pub fn resolve(self, k: usize) -> f64 {
        match self {
            SmoothL1Target::Corrected => k as f64 + 1.0,
            SmoothL1Target::Literal => k as f64,
        }
    }
}

fn n_valid(mask: &[bool]) -> Result<usize> {
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(CarError::EmptyMask);
    }
    Ok(n)
}

fn check_rows(what: &'static str, rows: usize, mask: &[bool]) -> Result<()> {
    if rows != mask.len() {
        return Err(CarError::shape(what, format!("{} rows", mask.len()), rows));
    }
    Ok(())
}

fn check_logits(logits: &Matrix) -> Result<()> {
    if !logits.all_finite() {
        return Err(CarError::NonFinite("logits"));
    }
    Ok(())
}

fn check_target_shape(logits: &Matrix, target: &LabelMap, cols: usize) -> Result<()> {
    if target.n() != logits.rows() || target.k() != cols {
        return Err(CarError::shape(
            "target",
            format!("{}x{}", logits.rows(), cols),
            format!("{}x{}", target.n(), target.k()),
        ));
    }
    Ok(())
}

/// Stable `log Σ exp(row)`.
fn log_sum_exp(row: &[f64]) -> f64 {
    let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + row.iter().map(|&l| (l - top).exp()).sum::<f64>().ln()
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &l) in out.iter_mut().zip(row) {
        *o = (l - top).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Result<ProbMap> {
    check_logits(logits)?;
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for j in 0..logits.rows() {
        softmax_row(logits.row(j), out.row_mut(j));
    }
    Ok(ProbMap::from_parts_unchecked(out, ProbSemantics::Softmax))
}

/// Logistic function evaluated without overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary cross entropy of target `y` against `σ(z)`, and its derivative in `z`.
#[inline]
fn bce_term(z: f64, y: f64) -> (f64, f64) {
    let floor = log_floor();
    let log_p = -softplus(-z);
    let log_q = -softplus(z);
    let s = sigmoid(z);
    let (lp, lp_live) = if log_p < floor { (floor, false) } else { (log_p, true) };
    let (lq, lq_live) = if log_q < floor { (floor, false) } else { (log_q, true) };
    let value = -(y * lp + (1.0 - y) * lq);
    let grad = match (lp_live, lq_live) {
        (true, true) => s - y,
        _ => {
            let mut g = 0.0;
            if lp_live {
                g -= y * sigmoid(-z);
            }
            if lq_live {
                g += (1.0 - y) * s;
            }
            g
        }
    };
    (value, grad)
}

/// Shared kernel for CE and WCE: `-Σ y_p log softmax_p`.
fn softmax_target_loss(logits: &Matrix, target: &LabelMap, mask: &[bool]) -> Result<LossResult> {
    check_logits(logits)?;
    check_rows("logits", logits.rows(), mask)?;
    check_target_shape(logits, target, logits.cols())?;
    let n = n_valid(mask)? as f64;
    let floor = log_floor();
    let k = logits.cols();
    let mut grad = Matrix::zeros(logits.rows(), k);
    let mut per_pixel = Vec::with_capacity(logits.rows());
    let mut probs = vec![0.0; k];
    for (j, &valid) in mask.iter().enumerate() {
        if !valid {
            continue;
        }
        let row = logits.row(j);
        let y = target.row(j);
        if let Some((col, &value)) = y.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(CarError::TargetOutOfRange { row: j, col, value });
        }
        let lse = log_sum_exp(row);
        softmax_row(row, &mut probs);
        let mut loss = 0.0;
        let mut live_mass = 0.0;
        let g = grad.row_mut(j);
        for p in 0..k {
            let ls = row[p] - lse;
            if ls < floor {
                loss -= y[p] * floor;
            } else {
                loss -= y[p] * ls;
                live_mass += y[p];
                g[p] = -y[p];
            }
        }
        for p in 0..k {
            g[p] = (g[p] + live_mass * probs[p]) / n;
        }
        per_pixel.push(loss);
    }
    Ok(LossResult {
        value: chunked_sum(&per_pixel) / n,
        grad,
    })
}

/// Cross entropy against one-hot targets.
pub fn ce_loss(logits: &Matrix, target: &LabelMap, mask: &[bool]) -> Result<LossResult> {
    target.require(&[LabelKind::OneHot], "one_hot")?;
    softmax_target_loss(logits, target, mask)
}

/// Cross entropy against soft targets; gradient `(Σy) softmax - y`.
///
/// One-hot targets are accepted and give exactly [`ce_loss`].
pub fn weighted_ce_loss(logits: &Matrix, target: &LabelMap, mask: &[bool]) -> Result<LossResult> {
    target.require(
        &[LabelKind::Smooth2, LabelKind::Smooth3, LabelKind::OneHot],
        "smooth2, smooth3 or one_hot",
    )?;
    softmax_target_loss(logits, target, mask)
}

fn check_unit_interval(target: &LabelMap, mask: &[bool]) -> Result<()> {
    for j in (0..target.n()).filter(|&j| mask[j]) {
        if let Some((col, &value)) = target
            .row(j)
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(CarError::TargetOutOfRange { row: j, col, value });
        }
    }
    Ok(())
}

/// Independent BCE on every class logit.
pub fn multi_bce_loss(logits: &Matrix, target: &LabelMap, mask: &[bool]) -> Result<LossResult> {
    target.require(&[LabelKind::Smooth1], "smooth1")?;
    check_logits(logits)?;
    check_rows("logits", logits.rows(), mask)?;
    check_target_shape(logits, target, logits.cols())?;
    check_unit_interval(target, mask)?;
    let n = n_valid(mask)? as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut per_pixel = Vec::with_capacity(logits.rows());
    for j in (0..logits.rows()).filter(|&j| mask[j]) {
        let mut loss = 0.0;
        let (row, y) = (logits.row(j), target.row(j));
        let g = grad.row_mut(j);
        for p in 0..row.len() {
            let (v, d) = bce_term(row[p], y[p]);
            loss += v;
            g[p] = d / n;
        }
        per_pixel.push(loss);
    }
    Ok(LossResult {
        value: chunked_sum(&per_pixel) / n,
        grad,
    })
}

/// Per-class ordinal probability `σ(l[2p+1] - l[2p])` from `2K` logits.
pub fn ordinal_probs(logits: &Matrix) -> Result<ProbMap> {
    check_logits(logits)?;
    if !logits.cols().is_multiple_of(2) {
        return Err(CarError::OddChannels(logits.cols()));
    }
    let k = logits.cols() / 2;
    let mut out = Matrix::zeros(logits.rows(), k);
    for j in 0..logits.rows() {
        let row = logits.row(j);
        for (p, o) in out.row_mut(j).iter_mut().enumerate() {
            *o = sigmoid(row[2 * p + 1] - row[2 * p]);
        }
    }
    Ok(ProbMap::from_parts_unchecked(out, ProbSemantics::PerClassSigmoid))
}

/// Ordinal regression loss on paired logits: BCE of `σ(l[2p+1] - l[2p])`
/// against the ordinal target.
pub fn ordinal_loss(logits: &Matrix, target: &LabelMap, mask: &[bool]) -> Result<LossResult> {
    target.require(&[LabelKind::Ordinal], "ordinal")?;
    check_logits(logits)?;
    if !logits.cols().is_multiple_of(2) {
        return Err(CarError::OddChannels(logits.cols()));
    }
    check_rows("logits", logits.rows(), mask)?;
    check_target_shape(logits, target, logits.cols() / 2)?;
    check_unit_interval(target, mask)?;
    let n = n_valid(mask)? as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut per_pixel = Vec::with_capacity(logits.rows());
    for j in (0..logits.rows()).filter(|&j| mask[j]) {
        let (row, y) = (logits.row(j), target.row(j));
        let g = grad.row_mut(j);
        let mut loss = 0.0;
        for p in 0..y.len() {
            let (v, d) = bce_term(row[2 * p + 1] - row[2 * p], y[p]);
            loss += v;
            g[2 * p + 1] = d / n;
            g[2 * p] = -d / n;
        }
        per_pixel.push(loss);
    }
    Ok(LossResult {
        value: chunked_sum(&per_pixel) / n,
        grad,
    })
}

/// Huber-style penalty with unit threshold; `|x| = 1` takes the linear branch.
#[inline]
fn smooth_l1(x: f64) -> (f64, f64) {
    if x.abs() < 1.0 {
        (0.5 * x * x, x)
    } else {
        (x.abs() - 0.5, x.signum())
    }
}

/// Expected 1-based class index `Σ ŷ_p (p + 1)` of a probability row.
#[inline]
pub fn expected_index(row: &[f64]) -> f64 {
    row.iter().enumerate().map(|(p, &y)| y * (p as f64 + 1.0)).sum()
}

fn check_targets(targets: usize, mask: &[bool]) -> Result<()> {
    if targets != mask.len() {
        return Err(CarError::shape("targets", mask.len(), targets));
    }
    Ok(())
}

/// Smooth-L1 between the expected index and continuous targets `t`.
/// The gradient is with respect to the probabilities.
pub fn smooth_l1_loss_continuous(probs: &ProbMap, targets: &[f64], mask: &[bool]) -> Result<LossResult> {
    probs.require(ProbSemantics::Softmax)?;
    check_rows("probs", probs.n(), mask)?;
    check_targets(targets.len(), mask)?;
    let n = n_valid(mask)? as f64;
    let mut grad = Matrix::zeros(probs.n(), probs.k());
    let mut per_pixel = Vec::with_capacity(probs.n());
    for j in (0..probs.n()).filter(|&j| mask[j]) {
        let (v, d) = smooth_l1(expected_index(probs.row(j)) - targets[j]);
        per_pixel.push(v);
        for (p, g) in grad.row_mut(j).iter_mut().enumerate() {
            *g = d * (p as f64 + 1.0) / n;
        }
    }
    Ok(LossResult {
        value: chunked_sum(&per_pixel) / n,
        grad,
    })
}

/// Smooth-L1 between the expected index and the class targets resolved by `mode`.
pub fn smooth_l1_loss(
    probs: &ProbMap,
    target_class: &[usize],
    mask: &[bool],
    mode: SmoothL1Target,
) -> Result<LossResult> {
    let t: Vec<f64> = target_class.iter().map(|&k| mode.resolve(k)).collect();
    smooth_l1_loss_continuous(probs, &t, mask)
}

/// [`smooth_l1_loss`] evaluated on logits, gradient chained through the softmax.
pub fn smooth_l1_loss_logits(
    logits: &Matrix,
    target_class: &[usize],
    mask: &[bool],
    mode: SmoothL1Target,
) -> Result<LossResult> {
    let probs = softmax(logits)?;
    check_rows("logits", logits.rows(), mask)?;
    check_targets(target_class.len(), mask)?;
    let n = n_valid(mask)? as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut per_pixel = Vec::with_capacity(logits.rows());
    for j in (0..logits.rows()).filter(|&j| mask[j]) {
        let row = probs.row(j);
        let e = expected_index(row);
        let (v, d) = smooth_l1(e - mode.resolve(target_class[j]));
        per_pixel.push(v);
        for (r, g) in grad.row_mut(j).iter_mut().enumerate() {
            *g = d * row[r] * ((r as f64 + 1.0) - e) / n;
        }
    }
    Ok(LossResult {
        value: chunked_sum(&per_pixel) / n,
        grad,
    })
}

/// Value and `∂L/∂h` of the scale-invariant loss on log-residuals `h`.
fn si_core(h: &[f64], omega: f64, lambda: f64) -> (f64, Vec<f64>) {
    let n = h.len() as f64;
    let sq: Vec<f64> = h.iter().map(|v| v * v).collect();
    let sum_h = chunked_sum(h);
    let mean_sq = chunked_sum(&sq) / n;
    let mean_h = sum_h / n;
    let var = mean_sq - lambda * mean_h * mean_h;
    if var <= 0.0 {
        // sqrt is not differentiable at 0; use the zero subgradient
        return (0.0, vec![0.0; h.len()]);
    }
    let root = var.sqrt();
    let value = omega * root;
    let scale = omega / (2.0 * root);
    let grad = h
        .iter()
        .map(|&hj| scale * (2.0 * hj / n - 2.0 * lambda * sum_h / (n * n)))
        .collect();
    (value, grad)
}

fn check_si_params(omega: f64, lambda: f64) -> Result<()> {
    if !(omega.is_finite() && lambda.is_finite()) {
        return Err(CarError::BadConfig(format!(
            "scale-invariant parameters must be finite, got omega={omega}, lambda={lambda}"
        )));
    }
    Ok(())
}

/// Valid pixel indices of `gt`, with positivity checks on both maps.
fn si_pixels(pred: &[f64], pred_mask: &[bool], gt: &GroundTruthDepth) -> Result<Vec<usize>> {
    if pred.len() != gt.len() {
        return Err(CarError::shape("prediction", gt.len(), pred.len()));
    }
    let mut idx = Vec::with_capacity(gt.len());
    for j in (0..gt.len()).filter(|&j| gt.mask[j]) {
        if !pred_mask[j] {
            return Err(CarError::MaskMismatch);
        }
        for value in [pred[j], gt.values[j]] {
            if !(value.is_finite() && value > 0.0) {
                return Err(CarError::NonPositiveDepth { index: j, value });
            }
        }
        idx.push(j);
    }
    if idx.is_empty() {
        return Err(CarError::EmptyMask);
    }
    Ok(idx)
}

/// `ω sqrt(mean(h²) - λ mean(h)²)` with `h = log d̂ - log d`.
/// The gradient is with respect to the predicted depths, shape `N × 1`.
pub fn scale_invariant_loss(
    pred_depth: &DepthMap,
    gt: &GroundTruthDepth,
    omega: f64,
    lambda: f64,
) -> Result<LossResult> {
    check_si_params(omega, lambda)?;
    let idx = si_pixels(&pred_depth.values, &pred_depth.mask, gt)?;
    let h: Vec<f64> = idx
        .iter()
        .map(|&j| pred_depth.values[j].ln() - gt.values[j].ln())
        .collect();
    let (value, dh) = si_core(&h, omega, lambda);
    let mut grad = Matrix::zeros(gt.len(), 1);
    for (&j, g) in idx.iter().zip(dh) {
        grad.row_mut(j)[0] = g / pred_depth.values[j];
    }
    Ok(LossResult { value, grad })
}

/// Scale-invariant loss of the adaptive decode `Σ values[p] softmax_p`,
/// with the gradient chained back to the logits.
pub fn scale_invariant_loss_logits(
    logits: &Matrix,
    table: &DepthTable,
    gt: &GroundTruthDepth,
    omega: f64,
    lambda: f64,
) -> Result<LossResult> {
    table.require(TableSpace::LinearAdaptive)?;
    if logits.cols() != table.k() {
        return Err(CarError::shape("logits", table.k(), logits.cols()));
    }
    let probs = softmax(logits)?;
    let values = table.values();
    let depth: Vec<f64> = probs
        .matrix()
        .iter_rows()
        .map(|r| r.iter().zip(values).map(|(y, v)| y * v).sum())
        .collect();
    let pred = DepthMap::dense(depth);
    let inner = scale_invariant_loss(&pred, gt, omega, lambda)?;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for j in 0..logits.rows() {
        let dd = inner.grad.row(j)[0];
        if dd == 0.0 {
            continue;
        }
        let row = probs.row(j);
        for (r, g) in grad.row_mut(j).iter_mut().enumerate() {
            *g = dd * row[r] * (values[r] - pred.values[j]);
        }
    }
    Ok(LossResult {
        value: inner.value,
        grad,
    })
}
