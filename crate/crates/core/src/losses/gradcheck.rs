//! Central-difference verification of the analytic loss gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    ce_loss, multi_bce_loss, ordinal_loss, scale_invariant_loss, smooth_l1_loss_logits, weighted_ce_loss,
    LossKind, LossResult, SmoothL1Target, DEFAULT_SI_LAMBDA, DEFAULT_SI_OMEGA,
};
use crate::array::{DepthMap, GroundTruthDepth, Matrix};
use crate::encode::{LabelKind, LabelMap};

pub const DEFAULT_FD_EPS: f64 = 1e-6;

/// Max of `|analytic - numeric| / max(1, |numeric|)` over all coordinates of `point`.
///
/// `loss` returns the value and analytic gradient (flattened, same length as `point`).
pub fn finite_diff_check<F>(loss: F, point: &[f64], eps: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss(point);
    assert_eq!(analytic.len(), point.len(), "gradient length must match the point");
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let (up, _) = loss(&x);
        x[i] = orig - eps;
        let (down, _) = loss(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max((analytic[i] - numeric).abs() / numeric.abs().max(1.0));
    }
    worst
}

/// Tolerance each loss must meet.
pub fn tolerance(kind: LossKind) -> f64 {
    match kind {
        LossKind::ScaleInvariant => 1e-4,
        _ => 1e-5,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub kind: LossKind,
    pub points: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

const PIXELS: usize = 10;
const CLASSES: usize = 8;

fn random_mask(rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut mask: Vec<bool> = (0..PIXELS).map(|_| rng.random_bool(0.8)).collect();
    mask[0] = true;
    mask
}

fn random_matrix(rng: &mut ChaCha8Rng, cols: usize, spread: f64) -> Vec<f64> {
    (0..PIXELS * cols).map(|_| rng.random_range(-spread..spread)).collect()
}

fn flat(r: LossResult) -> (f64, Vec<f64>) {
    (r.value, r.grad.into_vec())
}

fn labels(kind: LabelKind, cols: usize, data: Vec<f64>) -> LabelMap {
    LabelMap::from_matrix(Matrix::new(PIXELS, cols, data).expect("shape"), kind, None).expect("finite")
}

/// Worst error of one random instance of `kind`.
fn check_once(kind: LossKind, rng: &mut ChaCha8Rng, eps: f64) -> f64 {
    let mask = random_mask(rng);
    match kind {
        LossKind::Ce | LossKind::Wce | LossKind::Mbce => {
            let point = random_matrix(rng, CLASSES, 3.0);
            let mut y = vec![0.0; PIXELS * CLASSES];
            let label_kind = match kind {
                LossKind::Ce => {
                    for j in 0..PIXELS {
                        y[j * CLASSES + rng.random_range(0..CLASSES)] = 1.0;
                    }
                    LabelKind::OneHot
                }
                LossKind::Wce => {
                    for row in y.chunks_mut(CLASSES) {
                        for v in row.iter_mut() {
                            *v = rng.random_range(0.0..1.0);
                        }
                        let s: f64 = row.iter().sum();
                        row.iter_mut().for_each(|v| *v /= s);
                    }
                    LabelKind::Smooth2
                }
                _ => {
                    y.iter_mut().for_each(|v| *v = rng.random_range(0.0..=1.0));
                    LabelKind::Smooth1
                }
            };
            let target = labels(label_kind, CLASSES, y);
            finite_diff_check(
                |x| {
                    let logits = Matrix::new(PIXELS, CLASSES, x.to_vec()).expect("shape");
                    let r = match kind {
                        LossKind::Ce => ce_loss(&logits, &target, &mask),
                        LossKind::Wce => weighted_ce_loss(&logits, &target, &mask),
                        _ => multi_bce_loss(&logits, &target, &mask),
                    };
                    flat(r.expect("valid instance"))
                },
                &point,
                eps,
            )
        }
        LossKind::Ordinal => {
            let point = random_matrix(rng, 2 * CLASSES, 3.0);
            let mut y = vec![0.0; PIXELS * CLASSES];
            for row in y.chunks_mut(CLASSES) {
                let k = rng.random_range(0..=CLASSES);
                row.iter_mut().take(k).for_each(|v| *v = 1.0);
            }
            let target = labels(LabelKind::Ordinal, CLASSES, y);
            finite_diff_check(
                |x| {
                    let logits = Matrix::new(PIXELS, 2 * CLASSES, x.to_vec()).expect("shape");
                    flat(ordinal_loss(&logits, &target, &mask).expect("valid instance"))
                },
                &point,
                eps,
            )
        }
        LossKind::SmoothL1 => {
            let point = random_matrix(rng, CLASSES, 3.0);
            let classes: Vec<usize> = (0..PIXELS).map(|_| rng.random_range(0..CLASSES)).collect();
            finite_diff_check(
                |x| {
                    let logits = Matrix::new(PIXELS, CLASSES, x.to_vec()).expect("shape");
                    flat(
                        smooth_l1_loss_logits(&logits, &classes, &mask, SmoothL1Target::Corrected)
                            .expect("valid instance"),
                    )
                },
                &point,
                eps,
            )
        }
        LossKind::ScaleInvariant => {
            let point: Vec<f64> = (0..PIXELS).map(|_| rng.random_range(1.0..80.0)).collect();
            let gt_values: Vec<f64> = (0..PIXELS).map(|_| rng.random_range(1.0..80.0)).collect();
            let gt = GroundTruthDepth::new(gt_values, mask.clone()).expect("lengths");
            finite_diff_check(
                |x| {
                    let pred = DepthMap::dense(x.to_vec());
                    flat(
                        scale_invariant_loss(&pred, &gt, DEFAULT_SI_OMEGA, DEFAULT_SI_LAMBDA)
                            .expect("valid instance"),
                    )
                },
                &point,
                eps,
            )
        }
    }
}

/// Runs `points` random instances of `kind` (10 pixels, 8 classes).
pub fn check_loss(kind: LossKind, points: usize, seed: u64) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (kind as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let max_error = (0..points)
        .map(|_| check_once(kind, &mut rng, DEFAULT_FD_EPS))
        .fold(0.0, f64::max);
    GradcheckReport {
        kind,
        points,
        max_error,
        tolerance: tolerance(kind),
    }
}

/// [`check_loss`] over every loss family.
pub fn check_all(points: usize, seed: u64) -> Vec<GradcheckReport> {
    LossKind::ALL.iter().map(|&k| check_loss(k, points, seed)).collect()
}
