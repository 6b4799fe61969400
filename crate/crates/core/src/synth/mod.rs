//! Synthetic desk-scale benchmark.
//!
//! A scene is a piecewise-planar log-depth map observed through
//! heteroscedastic noise. A linear head over a small fixed feature basis is
//! trained with each classification strategy, decoded, scored and ranked by
//! every applicable uncertainty estimator.

mod bench;
mod scene;
mod train;

pub use bench::{run_benchmark, AusePair, BenchmarkReport, CellReport, MeanStd, StrategySummary};
pub use scene::{gen_scene, SceneConfig, SynthScene, FEATURES};
pub use train::{infer, train, Inference, Predictor, Trained};

use serde::{Deserialize, Serialize};

use crate::decode::{DecodeMethod, OrdinalDecodeMode};
use crate::encode::{LabelKind, OrdinalMode, DEFAULT_GAMMA_SMOOTH1, DEFAULT_GAMMA_SMOOTH2, DEFAULT_GAMMA_SMOOTH3};
use crate::error::{CarError, Result};
use crate::losses::{LossKind, SmoothL1Target, DEFAULT_SI_LAMBDA, DEFAULT_SI_OMEGA};
use crate::tables::{make_adaptive_table, make_uniform_log_table, DepthRange, DepthTable, WidthVector};
use crate::uncertainty::{ReencodeMode, UncertaintyMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StrategyName {
    #[serde(rename = "li-onehot-ce")]
    LiOnehotCe,
    #[serde(rename = "cao-smo3-wce")]
    CaoSmo3Wce,
    #[serde(rename = "sorn-smo2-wce")]
    SornSmo2Wce,
    #[serde(rename = "yang-smo1-mbce")]
    YangSmo1Mbce,
    #[serde(rename = "dorn-ordinal")]
    DornOrdinal,
    #[serde(rename = "ds-side-smoothl1")]
    DsSideSmoothl1,
    #[serde(rename = "adabins-si")]
    AdabinsSi,
}

impl StrategyName {
    pub const ALL: [StrategyName; 7] = [
        StrategyName::LiOnehotCe,
        StrategyName::CaoSmo3Wce,
        StrategyName::SornSmo2Wce,
        StrategyName::YangSmo1Mbce,
        StrategyName::DornOrdinal,
        StrategyName::DsSideSmoothl1,
        StrategyName::AdabinsSi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyName::LiOnehotCe => "li-onehot-ce",
            StrategyName::CaoSmo3Wce => "cao-smo3-wce",
            StrategyName::SornSmo2Wce => "sorn-smo2-wce",
            StrategyName::YangSmo1Mbce => "yang-smo1-mbce",
            StrategyName::DornOrdinal => "dorn-ordinal",
            StrategyName::DsSideSmoothl1 => "ds-side-smoothl1",
            StrategyName::AdabinsSi => "adabins-si",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.name() == s)
    }

    /// The encoder, loss and decoder each strategy is built from.
    pub fn pairing(self) -> (LabelKind, LossKind, DecodeMethod) {
        use DecodeMethod::*;
        match self {
            StrategyName::LiOnehotCe => (LabelKind::OneHot, LossKind::Ce, SoftWeighted),
            StrategyName::CaoSmo3Wce => (LabelKind::Smooth3, LossKind::Wce, SoftWeighted),
            StrategyName::SornSmo2Wce => (LabelKind::Smooth2, LossKind::Wce, Argmax),
            StrategyName::YangSmo1Mbce => (LabelKind::Smooth1, LossKind::Mbce, SoftWeighted),
            StrategyName::DornOrdinal => (LabelKind::Ordinal, LossKind::Ordinal, OrdinalSum),
            StrategyName::DsSideSmoothl1 => (LabelKind::OneHot, LossKind::SmoothL1, SoftWeighted),
            // no classification target: the loss is on the decoded depth
            StrategyName::AdabinsSi => (LabelKind::OneHot, LossKind::ScaleInvariant, Adaptive),
        }
    }

    pub fn default_gamma(self) -> Option<f64> {
        match self {
            StrategyName::CaoSmo3Wce => Some(DEFAULT_GAMMA_SMOOTH3),
            StrategyName::SornSmo2Wce => Some(DEFAULT_GAMMA_SMOOTH2),
            StrategyName::YangSmo1Mbce => Some(DEFAULT_GAMMA_SMOOTH1),
            _ => None,
        }
    }


    /// Logit channels per pixel for `k` classes.
    pub fn channels(self, k: usize) -> usize {
        match self {
            StrategyName::DornOrdinal => 2 * k,
            _ => k,
        }
    }

    pub fn uses_adaptive_table(self) -> bool {
        self == StrategyName::AdabinsSi
    }

    /// Uncertainty estimators that apply to the strategy's output.
    pub fn uncertainty_methods(self) -> &'static [UncertaintyMethod] {
        use UncertaintyMethod::*;
        match self {
            StrategyName::DornOrdinal => &[EDistOrdinal],
            StrategyName::AdabinsSi => &[SEntr, OneMinusMcp, EDistAdaptive],
            _ => &[SEntr, OneMinusMcp, EDist],
        }
    }
}

/// One benchmark strategy. Deserializes from a bare name or a full object;
/// omitted fields take the strategy's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StrategySpec")]
pub struct StrategyConfig {
    pub name: StrategyName,
    pub label: LabelKind,
    pub gamma: Option<f64>,
    pub loss: LossKind,
    pub decoder: DecodeMethod,
    pub lr_scale: f64,
}

impl StrategyConfig {
    pub fn new(name: StrategyName) -> Self {
        let (label, loss, decoder) = name.pairing();
        StrategyConfig {
            name,
            label,
            gamma: name.default_gamma(),
            loss,
            decoder,
            lr_scale: 1.0,
        }
    }

    /// Checks the encoder/loss/decoder combination against the strategy's pairing.
    pub fn validate(&self) -> Result<()> {
        let (label, loss, decoder) = self.name.pairing();
        if (self.label, self.loss, self.decoder) != (label, loss, decoder) {
            return Err(CarError::BadConfig(format!(
                "{} pairs {} labels, {} loss and {:?} decoding; got {}, {}, {:?}",
                self.name.name(),
                label.name(),
                loss.name(),
                decoder,
                self.label.name(),
                self.loss.name(),
                self.decoder
            )));
        }
        match (self.name.default_gamma(), self.gamma) {
            (Some(_), Some(g)) if !(g.is_finite() && g > 0.0) => return Err(CarError::InvalidGamma(g)),
            (Some(_), None) => return Err(CarError::BadConfig(format!("{} needs gamma", self.name.name()))),
            (None, Some(_)) => {
                return Err(CarError::BadConfig(format!("{} takes no gamma", self.name.name())))
            }
            _ => {}
        }
        if !(self.lr_scale.is_finite() && self.lr_scale >= 0.0) {
            return Err(CarError::BadConfig(format!("lr_scale must be >= 0, got {}", self.lr_scale)));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StrategySpec {
    Name(StrategyName),
    Full(RawStrategy),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrategy {
    name: StrategyName,
    label: Option<LabelKind>,
    gamma: Option<f64>,
    loss: Option<LossKind>,
    decoder: Option<DecodeMethod>,
    lr_scale: Option<f64>,
}

impl TryFrom<StrategySpec> for StrategyConfig {
    type Error = CarError;

    fn try_from(spec: StrategySpec) -> Result<Self> {
        let cfg = match spec {
            StrategySpec::Name(n) => StrategyConfig::new(n),
            StrategySpec::Full(raw) => {
                let base = StrategyConfig::new(raw.name);
                StrategyConfig {
                    name: raw.name,
                    label: raw.label.unwrap_or(base.label),
                    gamma: raw.gamma.or(base.gamma),
                    loss: raw.loss.unwrap_or(base.loss),
                    decoder: raw.decoder.unwrap_or(base.decoder),
                    lr_scale: raw.lr_scale.unwrap_or(base.lr_scale),
                }
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Convention switches shared by every cell of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Modes {
    pub ordinal_encoding: OrdinalMode,
    pub ordinal_decode: OrdinalDecodeMode,
    pub reencode: ReencodeMode,
    pub smooth_l1_target: SmoothL1Target,
    pub si_omega: f64,
    pub si_lambda: f64,
}

impl Default for Modes {
    fn default() -> Self {
        Modes {
            ordinal_encoding: OrdinalMode::Strict,
            ordinal_decode: OrdinalDecodeMode::Clamped,
            reencode: ReencodeMode::Strict,
            smooth_l1_target: SmoothL1Target::Corrected,
            si_omega: DEFAULT_SI_OMEGA,
            si_lambda: DEFAULT_SI_LAMBDA,
        }
    }
}

/// Everything needed to reproduce a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub k: usize,
    pub epochs: usize,
    pub lr: f64,
    pub step: f64,
    pub seeds: Vec<u64>,
    pub strategies: Vec<StrategyConfig>,
    pub modes: Modes,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: SceneConfig::default(),
            k: 16,
            epochs: 300,
            lr: 0.5,
            step: crate::metrics::DEFAULT_STEP,
            seeds: vec![0, 1, 2],
            strategies: StrategyName::ALL.into_iter().map(StrategyConfig::new).collect(),
            modes: Modes::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.k == 0 {
            return Err(CarError::ZeroBins);
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(CarError::BadConfig(format!("lr must be >= 0, got {}", self.lr)));
        }
        crate::metrics::fraction_grid(self.step)?;
        if self.seeds.is_empty() {
            return Err(CarError::BadConfig("no seeds".into()));
        }
        if self.strategies.is_empty() {
            return Err(CarError::BadConfig("no strategies".into()));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        let m = &self.modes;
        if !(m.si_omega.is_finite() && m.si_omega > 0.0 && (0.0..=1.0).contains(&m.si_lambda)) {
            return Err(CarError::BadConfig("si_omega must be > 0 and si_lambda in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn range(&self) -> Result<DepthRange> {
        DepthRange::new(self.scene.a, self.scene.b)
    }

    /// The depth table a strategy trains against.
    pub fn table_for(&self, name: StrategyName) -> Result<DepthTable> {
        if name.uses_adaptive_table() {
            make_adaptive_table(self.range()?, &WidthVector::uniform(self.k)?)
        } else {
            make_uniform_log_table(self.range()?, self.k)
        }
    }
}
