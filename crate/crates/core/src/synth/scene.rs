use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::{GroundTruthDepth, Matrix};
use crate::error::{CarError, Result};

/// Feature columns: `u, v, u², uv, v²` (coordinates in [-1, 1]) and the
/// observed log-depth rescaled so `[log a, log b]` maps to `[0, 1]`.
pub const FEATURES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub a: f64,
    pub b: f64,
    /// Number of vertical bands, each with its own log-depth plane.
    pub bands: usize,
    /// Noise standard deviation (log units) is `noise_base + noise_gain * d / b`.
    pub noise_base: f64,
    pub noise_gain: f64,
    /// Fraction of pixels without ground truth.
    pub invalid_fraction: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 64,
            height: 64,
            a: 1.0,
            b: 80.0,
            bands: 3,
            noise_base: 0.02,
            noise_gain: 0.3,
            invalid_fraction: 0.05,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CarError::BadConfig(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("scene must be non-empty, got {}x{}", self.width, self.height));
        }
        if !(self.a.is_finite() && self.a > 0.0 && self.b.is_finite() && self.a < self.b) {
            return bad(format!("need 0 < a < b, got a={}, b={}", self.a, self.b));
        }
        if self.bands == 0 || self.bands > self.width {
            return bad(format!("bands must be in [1, width], got {}", self.bands));
        }
        if !(self.noise_base >= 0.0 && self.noise_gain >= 0.0 && self.noise_base.is_finite() && self.noise_gain.is_finite()) {
            return bad("noise parameters must be finite and >= 0".into());
        }
        if !(0.0..1.0).contains(&self.invalid_fraction) {
            return bad(format!("invalid_fraction must be in [0, 1), got {}", self.invalid_fraction));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub width: usize,
    pub height: usize,
    pub gt: GroundTruthDepth,
    pub features: Matrix,
    pub observed_log_depth: Vec<f64>,
    pub noise_sigma: Vec<f64>,
}

/// Deterministic scene for `(seed, config)`.
pub fn gen_scene(seed: u64, config: &SceneConfig) -> Result<SynthScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (config.width, config.height);
    let (lo, hi) = (config.a.ln(), config.b.ln());
    let span = hi - lo;

    // band boundaries over columns, then one plane per band
    let mut cuts: Vec<usize> = (1..config.bands).map(|_| rng.random_range(1..w.max(2))).collect();
    cuts.sort_unstable();
    let planes: Vec<[f64; 3]> = (0..config.bands)
        .map(|_| {
            [
                rng.random_range(lo..hi),
                rng.random_range(-0.6..0.6) * span,
                rng.random_range(-0.6..0.6) * span,
            ]
        })
        .collect();

    let coord = |i: usize, n: usize| if n > 1 { 2.0 * i as f64 / (n - 1) as f64 - 1.0 } else { 0.0 };
    let n = w * h;
    let mut values = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut observed = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n * FEATURES);
    for row in 0..h {
        let v = coord(row, h);
        for col in 0..w {
            let u = coord(col, w);
            let band = cuts.partition_point(|&c| c <= col);
            let [c0, cu, cv] = planes[band];
            let log_d = (c0 + 0.5 * cu * u + 0.5 * cv * v).clamp(lo, hi);
            let d = log_d.exp().clamp(config.a, config.b);
            let s = config.noise_base + config.noise_gain * d / config.b;
            let z: f64 = StandardNormal.sample(&mut rng);
            let obs = log_d + s * z;
            let valid = rng.random::<f64>() >= config.invalid_fraction;
            values.push(if valid { d } else { 0.0 });
            mask.push(valid);
            observed.push(obs);
            sigma.push(s);
            features.extend_from_slice(&[u, v, u * u, u * v, v * v, (obs - lo) / span]);
        }
    }
    if !mask.iter().any(|&m| m) {
        mask[0] = true;
        values[0] = observed[0].clamp(lo, hi).exp();
    }
    Ok(SynthScene {
        width: w,
        height: h,
        gt: GroundTruthDepth::new(values, mask)?,
        features: Matrix::new(n, FEATURES, features)?,
        observed_log_depth: observed,
        noise_sigma: sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let cfg = SceneConfig::default();
        let a = gen_scene(3, &cfg).unwrap();
        let b = gen_scene(3, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.gt.values, gen_scene(4, &cfg).unwrap().gt.values);
        for (&d, &m) in a.gt.values.iter().zip(&a.gt.mask) {
            if m {
                assert!((cfg.a..=cfg.b).contains(&d));
            }
        }
        assert_eq!(a.features.shape(), (cfg.pixels(), FEATURES));
        let invalid = a.gt.mask.iter().filter(|&&m| !m).count() as f64 / cfg.pixels() as f64;
        assert!(invalid > 0.02 && invalid < 0.1, "{invalid}");
    }

    #[test]
    fn noiseless_observation_is_exact() {
        let cfg = SceneConfig {
            noise_base: 0.0,
            noise_gain: 0.0,
            invalid_fraction: 0.0,
            ..SceneConfig::default()
        };
        let s = gen_scene(1, &cfg).unwrap();
        for (o, d) in s.observed_log_depth.iter().zip(&s.gt.values) {
            assert!((o - d.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_grows_with_depth() {
        let s = gen_scene(0, &SceneConfig::default()).unwrap();
        let mut pairs: Vec<(f64, f64)> = s.gt.values.iter().zip(&s.noise_sigma).map(|(&d, &n)| (d, n)).collect();
        pairs.retain(|p| p.0 > 0.0);
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn bad_configs() {
        for cfg in [
            SceneConfig { a: 2.0, b: 1.0, ..Default::default() },
            SceneConfig { width: 0, ..Default::default() },
            SceneConfig { invalid_fraction: 1.0, ..Default::default() },
            SceneConfig { noise_gain: -1.0, ..Default::default() },
        ] {
            assert!(matches!(gen_scene(0, &cfg), Err(CarError::BadConfig(_))));
        }
    }
}
