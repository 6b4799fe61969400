//! 16-bit binary PGM dumps for eyeballing depth and uncertainty maps.

use std::fs;
use std::path::Path;

use crate::error::{CarError, Result};

const MAXVAL: f64 = 65535.0;

/// Encodes `values` (row-major, `width` columns) as a P5 image, mapping
/// `[lo, hi]` linearly onto `[0, 65535]`. Pixels with `mask[j] == false` are 0.
pub fn encode(values: &[f64], mask: &[bool], width: usize, lo: f64, hi: f64) -> Result<Vec<u8>> {
    if width == 0 || !values.len().is_multiple_of(width) {
        return Err(CarError::shape("pgm width", format!("a divisor of {}", values.len()), width));
    }
    if mask.len() != values.len() {
        return Err(CarError::shape("pgm mask", values.len(), mask.len()));
    }
    let height = values.len() / width;
    let span = hi - lo;
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for (&v, &m) in values.iter().zip(mask) {
        let level = if !m || !v.is_finite() || span <= 0.0 {
            0
        } else {
            (((v - lo) / span).clamp(0.0, 1.0) * MAXVAL).round() as u16
        };
        out.extend_from_slice(&level.to_be_bytes());
    }
    Ok(out)
}

/// Depth map scaled to the fixed range `[a, b]`.
pub fn write_depth(path: impl AsRef<Path>, values: &[f64], mask: &[bool], width: usize, a: f64, b: f64) -> Result<()> {
    fs::write(path, encode(values, mask, width, a, b)?)?;
    Ok(())
}

/// Map normalized to its own `[min, max]` over valid pixels.
pub fn write_normalized(path: impl AsRef<Path>, values: &[f64], mask: &[bool], width: usize) -> Result<()> {
    let valid = values.iter().zip(mask).filter(|(v, &m)| m && v.is_finite()).map(|(v, _)| *v);
    let (lo, hi) = valid.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    fs::write(path, encode(values, mask, width, lo, hi)?)?;
    Ok(())
}
