use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scene::SynthScene;
use super::{Modes, StrategyConfig, StrategyName};
use crate::array::{DepthMap, Matrix, ProbMap};
use crate::decode::decode;
use crate::encode::{class_indices, encode, LabelMap};
use crate::error::{CarError, Result};
use crate::losses::{
    ce_loss, multi_bce_loss, ordinal_loss, ordinal_probs, scale_invariant_loss_logits, smooth_l1_loss_logits,
    softmax, weighted_ce_loss, LossKind, LossResult,
};
use crate::tables::{DepthTable, IndexMode};
use crate::uncertainty::{
    e_dist, e_dist_adaptive, e_dist_ordinal_with, ensemble_variance, one_minus_mcp, shannon_entropy, UncertaintyMap,
    UncertaintyMethod,
};

const INIT_STD: f64 = 0.01;

/// Linear head: `logits = features · weights + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Predictor {
    pub fn zeros(features: usize, channels: usize) -> Self {
        Predictor {
            weights: Matrix::zeros(features, channels),
            bias: vec![0.0; channels],
        }
    }

    /// Small Gaussian weights, zero bias.
    pub fn random(features: usize, channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let data = (0..features * channels).map(|_| normal.sample(&mut rng)).collect();
        Predictor {
            weights: Matrix::new(features, channels, data).expect("shape"),
            bias: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.bias.len()
    }

    pub fn forward(&self, features: &Matrix) -> Result<Matrix> {
        let (f, c) = self.weights.shape();
        if features.cols() != f {
            return Err(CarError::shape("features", f, features.cols()));
        }
        let mut out = Matrix::zeros(features.rows(), c);
        for (x, o) in features.iter_rows().zip(out.as_mut_slice().chunks_exact_mut(c)) {
            o.copy_from_slice(&self.bias);
            for (xi, w) in x.iter().zip(self.weights.iter_rows()) {
                for (oc, wc) in o.iter_mut().zip(w) {
                    *oc += xi * wc;
                }
            }
        }
        Ok(out)
    }

    /// One gradient step given `d loss / d logits`.
    fn step(&mut self, features: &Matrix, grad: &Matrix, lr: f64) {
        let c = self.channels();
        let mut dw = Matrix::zeros(self.weights.rows(), c);
        let mut db = vec![0.0; c];
        for (x, g) in features.iter_rows().zip(grad.iter_rows()) {
            for (b, gc) in db.iter_mut().zip(g) {
                *b += gc;
            }
            for (xi, row) in x.iter().zip(dw.as_mut_slice().chunks_exact_mut(c)) {
                for (r, gc) in row.iter_mut().zip(g) {
                    *r += xi * gc;
                }
            }
        }
        for (w, d) in self.weights.as_mut_slice().iter_mut().zip(dw.as_slice()) {
            *w -= lr * d;
        }
        for (b, d) in self.bias.iter_mut().zip(&db) {
            *b -= lr * d;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights.all_finite() && self.bias.iter().all(|b| b.is_finite())
    }
}

enum Targets {
    Labels(LabelMap),
    Classes(Vec<usize>),
    Depth,
}

fn targets(scene: &SynthScene, strategy: &StrategyConfig, table: &DepthTable, modes: &Modes) -> Result<Targets> {
    Ok(match strategy.loss {
        LossKind::SmoothL1 => Targets::Classes(class_indices(&scene.gt, table, IndexMode::Nearest)?),
        LossKind::ScaleInvariant => Targets::Depth,
        _ => Targets::Labels(encode(
            &scene.gt,
            table,
            strategy.label,
            strategy.gamma.unwrap_or(0.0),
            modes.ordinal_encoding,
        )?),
    })
}

fn loss_at(
    logits: &Matrix,
    scene: &SynthScene,
    strategy: &StrategyConfig,
    table: &DepthTable,
    modes: &Modes,
    targets: &Targets,
) -> Result<LossResult> {
    let mask = &scene.gt.mask;
    match (strategy.loss, targets) {
        (LossKind::Ce, Targets::Labels(y)) => ce_loss(logits, y, mask),
        (LossKind::Wce, Targets::Labels(y)) => weighted_ce_loss(logits, y, mask),
        (LossKind::Mbce, Targets::Labels(y)) => multi_bce_loss(logits, y, mask),
        (LossKind::Ordinal, Targets::Labels(y)) => ordinal_loss(logits, y, mask),
        (LossKind::SmoothL1, Targets::Classes(c)) => smooth_l1_loss_logits(logits, c, mask, modes.smooth_l1_target),
        (LossKind::ScaleInvariant, Targets::Depth) => {
            scale_invariant_loss_logits(logits, table, &scene.gt, modes.si_omega, modes.si_lambda)
        }
        _ => unreachable!("targets are built from the same loss kind"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub predictor: Predictor,
    /// Loss before each update, then the loss after the last one (`epochs + 1` entries).
    pub trace: Vec<f64>,
}

/// Per-cell seed for the predictor initialisation.
pub(crate) fn init_seed(seed: u64, name: StrategyName) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.name().bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Full-batch gradient descent of a randomly initialised linear head.
pub fn train(
    scene: &SynthScene,
    strategy: &StrategyConfig,
    table: &DepthTable,
    modes: &Modes,
    lr: f64,
    epochs: usize,
    seed: u64,
) -> Result<Trained> {
    strategy.validate()?;
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(CarError::BadConfig(format!("lr must be >= 0, got {lr}")));
    }
    let start = Predictor::random(
        scene.features.cols(),
        strategy.name.channels(table.k()),
        init_seed(seed, strategy.name),
    );
    train_from(start, scene, strategy, table, modes, lr, epochs)
}

/// [`train`] from a given starting point.
pub fn train_from(
    mut predictor: Predictor,
    scene: &SynthScene,
    strategy: &StrategyConfig,
    table: &DepthTable,
    modes: &Modes,
    lr: f64,
    epochs: usize,
) -> Result<Trained> {
    let targets = targets(scene, strategy, table, modes)?;
    let step = lr * strategy.lr_scale;
    let mut trace = Vec::with_capacity(epochs + 1);
    for epoch in 0..=epochs {
        let diverged = CarError::DivergedLoss { epoch };
        if !predictor.all_finite() {
            return Err(diverged);
        }
        let logits = predictor.forward(&scene.features)?;
        let r = match loss_at(&logits, scene, strategy, table, modes, &targets) {
            Ok(r) => r,
            Err(CarError::NonFinite(_)) => return Err(diverged),
            Err(e) => return Err(e),
        };
        if !r.value.is_finite() {
            return Err(diverged);
        }
        trace.push(r.value);
        if epoch < epochs && step > 0.0 {
            predictor.step(&scene.features, &r.grad, step);
        }
    }
    Ok(Trained { predictor, trace })
}

/// Predictions of a trained head on its scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub probs: ProbMap,
    /// Dense decoded depth (every pixel).
    pub depth: DepthMap,
    pub uncertainty: Vec<UncertaintyMap>,
}

/// Probabilities the strategy decodes from: per-class sigmoids for the
/// ordinal head, a softmax otherwise (the multi-BCE head included).
pub fn head_probs(strategy: &StrategyConfig, logits: &Matrix) -> Result<ProbMap> {
    match strategy.name {
        StrategyName::DornOrdinal => ordinal_probs(logits),
        _ => softmax(logits),
    }
}

pub fn infer(
    predictor: &Predictor,
    scene: &SynthScene,
    strategy: &StrategyConfig,
    table: &DepthTable,
    modes: &Modes,
) -> Result<Inference> {
    let logits = predictor.forward(&scene.features)?;
    let probs = head_probs(strategy, &logits)?;
    let depth = decode(table, &probs, strategy.decoder, modes.ordinal_decode)?;
    let uncertainty = strategy
        .name
        .uncertainty_methods()
        .iter()
        .map(|&m| match m {
            UncertaintyMethod::SEntr => shannon_entropy(&probs),
            UncertaintyMethod::OneMinusMcp => one_minus_mcp(&probs),
            UncertaintyMethod::EDist => e_dist(table, &probs, &depth),
            UncertaintyMethod::EDistAdaptive => e_dist_adaptive(table, &probs, &depth),
            UncertaintyMethod::EDistOrdinal => e_dist_ordinal_with(table, &probs, &depth, modes.reencode),
            UncertaintyMethod::EnsembleVariance => ensemble_variance(&[]),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Inference {
        probs,
        depth,
        uncertainty,
    })
}
