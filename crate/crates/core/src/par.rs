//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper preserves input order, and reductions are performed over
//! fixed-size chunks whose partial results are combined left to right, so the
//! result is bitwise identical whatever the thread count or [`ExecMode`].
//! Without the `parallel` feature, [`ExecMode::Parallel`] runs sequentially.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used by [`chunked_sum`]. Fixed so reduction order never
/// depends on the scheduler.
pub const REDUCE_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(mode: ExecMode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Sums `f(i)` for `i in 0..n` into a vector accumulator of length `width`.
///
/// Indices are split into chunks of [`REDUCE_CHUNK`]; each chunk is
/// accumulated sequentially and chunk partials are added in index order.
pub fn chunked_sum<F>(mode: ExecMode, n: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partial = |c: usize| {
        let mut acc = vec![0.0; width];
        let lo = c * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(n);
        for i in lo..hi {
            f(i, &mut acc);
        }
        acc
    };
    let partials = map_range(mode, chunks, partial);
    let mut total = vec![0.0; width];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_bitwise() {
        let f = |i: usize, acc: &mut [f64]| {
            let x = (i as f64 * 0.37).sin();
            acc[0] += x;
            acc[1] += x * x;
        };
        let a = chunked_sum(ExecMode::Sequential, 1000, 2, f);
        let b = chunked_sum(ExecMode::Parallel, 1000, 2, f);
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn map_preserves_order() {
        let v: Vec<usize> = (0..100).collect();
        let out = map(ExecMode::Parallel, &v, |x| x * 2);
        assert_eq!(out, (0..100).map(|x| x * 2).collect::<Vec<_>>());
    }
}
