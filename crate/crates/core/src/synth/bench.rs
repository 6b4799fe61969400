use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::gen_scene;
use super::train::{infer, train};
use super::{RunConfig, StrategyConfig};
use crate::error::Result;
use crate::metrics::{ause, depth_metrics, DepthMetrics, MetricKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AusePair {
    pub rmse: f64,
    pub abs_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub strategy: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<DepthMetrics>,
    pub ause: BTreeMap<String, AusePair>,
    pub loss_trace_file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Per-epoch training loss; written separately as CSV.
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub completed: usize,
    pub failed: usize,
    pub metrics: BTreeMap<String, MeanStd>,
    /// method -> metric kind -> statistics
    pub ause: BTreeMap<String, BTreeMap<String, MeanStd>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: RunConfig,
    pub cells: Vec<CellReport>,
    pub summary: BTreeMap<String, StrategySummary>,
}

impl BenchmarkReport {
    /// Mean AUSE of `method` for `strategy`, if any cell produced it.
    pub fn mean_ause(&self, strategy: &str, method: &str, kind: MetricKind) -> Option<f64> {
        self.summary
            .get(strategy)?
            .ause
            .get(method)?
            .get(kind.name())
            .map(|s| s.mean)
    }
}

pub fn trace_file_name(strategy: &str, seed: u64) -> String {
    format!("{strategy}_seed{seed}_loss.csv")
}

fn run_cell(config: &RunConfig, strategy: &StrategyConfig, seed: u64) -> Result<CellReport> {
    let scene = gen_scene(seed, &config.scene)?;
    let table = config.table_for(strategy.name)?;
    let trained = train(&scene, strategy, &table, &config.modes, config.lr, config.epochs, seed)?;
    let inf = infer(&trained.predictor, &scene, strategy, &table, &config.modes)?;
    let metrics = depth_metrics(&inf.depth, &scene.gt)?;
    let mut scores = BTreeMap::new();
    for u in &inf.uncertainty {
        scores.insert(
            u.method.name().to_string(),
            AusePair {
                rmse: ause(&inf.depth, &scene.gt, u, MetricKind::Rmse, config.step)?,
                abs_rel: ause(&inf.depth, &scene.gt, u, MetricKind::AbsRel, config.step)?,
            },
        );
    }
    Ok(CellReport {
        strategy: strategy.name.name().to_string(),
        seed,
        metrics: Some(metrics),
        ause: scores,
        loss_trace_file: trace_file_name(strategy.name.name(), seed),
        final_loss: trained.trace.last().copied(),
        error: None,
        loss_trace: trained.trace,
    })
}

fn metric_columns(m: &DepthMetrics) -> [(&'static str, f64); 8] {
    [
        ("rmse", m.rmse),
        ("abs_rel", m.abs_rel),
        ("sq_rel", m.sq_rel),
        ("rmse_log", m.rmse_log),
        ("log10", m.log10),
        ("delta1", m.delta1),
        ("delta2", m.delta2),
        ("delta3", m.delta3),
    ]
}

fn summarize(cells: &[CellReport]) -> BTreeMap<String, StrategySummary> {
    let mut grouped: BTreeMap<&str, Vec<&CellReport>> = BTreeMap::new();
    for c in cells {
        grouped.entry(&c.strategy).or_default().push(c);
    }
    grouped
        .into_iter()
        .map(|(name, group)| {
            let ok: Vec<&CellReport> = group.iter().copied().filter(|c| c.error.is_none()).collect();
            let mut metrics = BTreeMap::new();
            for (i, (col, _)) in metric_columns(&DepthMetrics::default_zero()).iter().enumerate() {
                let vals: Vec<f64> = ok.iter().filter_map(|c| c.metrics.as_ref()).map(|m| metric_columns(m)[i].1).collect();
                if let Some(s) = MeanStd::of(&vals) {
                    metrics.insert(col.to_string(), s);
                }
            }
            let mut ause: BTreeMap<String, BTreeMap<String, MeanStd>> = BTreeMap::new();
            let methods: std::collections::BTreeSet<&String> = ok.iter().flat_map(|c| c.ause.keys()).collect();
            for method in methods {
                let pick = |f: fn(&AusePair) -> f64| -> Vec<f64> {
                    ok.iter().filter_map(|c| c.ause.get(method)).map(f).collect()
                };
                let entry = ause.entry(method.clone()).or_default();
                for (kind, vals) in [(MetricKind::Rmse, pick(|p| p.rmse)), (MetricKind::AbsRel, pick(|p| p.abs_rel))] {
                    if let Some(s) = MeanStd::of(&vals) {
                        entry.insert(kind.name().to_string(), s);
                    }
                }
            }
            (
                name.to_string(),
                StrategySummary {
                    completed: ok.len(),
                    failed: group.len() - ok.len(),
                    metrics,
                    ause,
                },
            )
        })
        .collect()
}

impl DepthMetrics {
    fn default_zero() -> Self {
        DepthMetrics {
            rmse: 0.0,
            abs_rel: 0.0,
            sq_rel: 0.0,
            rmse_log: 0.0,
            log10: 0.0,
            delta1: 0.0,
            delta2: 0.0,
            delta3: 0.0,
            n_valid: 0,
        }
    }
}

/// Trains and scores every `(strategy, seed)` cell, in parallel.
///
/// A failing cell is recorded with its error and does not stop the others.
/// Cell order follows the config (strategies outer, seeds inner).
pub fn run_benchmark(config: &RunConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let jobs: Vec<(&StrategyConfig, u64)> = config
        .strategies
        .iter()
        .flat_map(|s| config.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let cells: Vec<CellReport> = jobs
        .par_iter()
        .map(|&(s, seed)| {
            run_cell(config, s, seed).unwrap_or_else(|e| CellReport {
                strategy: s.name.name().to_string(),
                seed,
                metrics: None,
                ause: BTreeMap::new(),
                loss_trace_file: trace_file_name(s.name.name(), seed),
                final_loss: None,
                error: Some(e.to_string()),
                loss_trace: Vec::new(),
            })
        })
        .collect();
    let summary = summarize(&cells);
    Ok(BenchmarkReport {
        config: config.clone(),
        cells,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{SceneConfig, StrategyName};

    #[test]
    fn mean_std() {
        let s = MeanStd::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(MeanStd::of(&[5.0]).unwrap().std, 0.0);
        assert!(MeanStd::of(&[]).is_none());
    }

    #[test]
    fn report_shape_and_applicability() {
        let cfg = RunConfig {
            scene: SceneConfig {
                width: 12,
                height: 12,
                ..SceneConfig::default()
            },
            epochs: 10,
            seeds: vec![0, 1],
            ..RunConfig::default()
        };
        let r = run_benchmark(&cfg).unwrap();
        assert_eq!(r.cells.len(), 14);
        let mut columns = 0;
        for c in &r.cells {
            assert!(c.error.is_none(), "{:?}", c.error);
            let name = StrategyName::parse(&c.strategy).unwrap();
            assert_eq!(c.ause.len(), name.uncertainty_methods().len());
            assert_eq!(c.ause.contains_key("e_dist_ordinal"), name == StrategyName::DornOrdinal);
            assert_eq!(c.loss_trace.len(), 11);
            columns += 2 * c.ause.len();
        }
        assert_eq!(columns, 2 * 2 * (5 * 3 + 3 + 1));
        assert!(r.mean_ause("yang-smo1-mbce", "e_dist", MetricKind::Rmse).is_some());
    }

    #[test]
    fn failing_cells_are_recorded() {
        let cfg = RunConfig {
            scene: SceneConfig {
                width: 8,
                height: 8,
                ..SceneConfig::default()
            },
            epochs: 20,
            lr: f64::MAX,
            seeds: vec![0],
            strategies: vec![StrategyConfig::new(StrategyName::YangSmo1Mbce), StrategyConfig::new(StrategyName::LiOnehotCe)],
            ..RunConfig::default()
        };
        let r = run_benchmark(&cfg).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert!(r.cells.iter().any(|c| c.error.is_some()));
        let failed: usize = r.summary.values().map(|s| s.failed).sum();
        assert!(failed >= 1);
    }
}
