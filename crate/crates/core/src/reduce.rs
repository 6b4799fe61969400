//! Fixed-order summation.
//!
//! Values are split into chunks of [`CHUNK`] elements. Each chunk is summed
//! sequentially (possibly on different threads), then the chunk sums are
//! combined sequentially in chunk order. The grouping never depends on the
//! thread count, so the result is bit-identical whatever pool runs it.

use rayon::prelude::*;

pub const CHUNK: usize = 4096;

/// Deterministic sum of `values`.
pub fn chunked_sum(values: &[f64]) -> f64 {
    if values.len() <= CHUNK {
        return values.iter().fold(0.0, |acc, &v| acc + v);
    }
    let partial: Vec<f64> = values
        .par_chunks(CHUNK)
        .map(|c| c.iter().fold(0.0, |acc, &v| acc + v))
        .collect();
    partial.iter().fold(0.0, |acc, &v| acc + v)
}

/// Deterministic sum of `f(i)` over `i in 0..n`, same grouping as [`chunked_sum`].
pub fn chunked_sum_by<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunk_sum = |start: usize| {
        let end = (start + CHUNK).min(n);
        (start..end).fold(0.0, |acc, i| acc + f(i))
    };
    if n <= CHUNK {
        return chunk_sum(0);
    }
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let partial: Vec<f64> = starts.par_iter().map(|&s| chunk_sum(s)).collect();
    partial.iter().fold(0.0, |acc, &v| acc + v)
}

/// Mean of `values` via [`chunked_sum`]; `None` when empty.
pub fn chunked_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(chunked_sum(values) / values.len() as f64)
    }
}
