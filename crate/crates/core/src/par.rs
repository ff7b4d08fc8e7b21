//! Order-preserving data parallelism. With the `std` feature the closures run
//! on the current rayon pool; results are always assembled in index order so
//! output never depends on the worker count.

use alloc::vec::Vec;

use crate::error::Result;

#[cfg(feature = "std")]
use rayon::prelude::*;

/// Fixed block size for partial reductions; independent of the worker count.
pub(crate) const BLOCK: usize = 512;

/// Runs `f(i, row)` over consecutive rows of length `row_len`.
pub(crate) fn try_rows<T, F>(data: &mut [T], row_len: usize, f: F) -> Result<()>
where
    T: Send,
    F: Fn(usize, &mut [T]) -> Result<()> + Sync + Send,
{
    if row_len == 0 {
        return Ok(());
    }
    #[cfg(feature = "std")]
    let results: Vec<Result<()>> = data
        .par_chunks_mut(row_len)
        .enumerate()
        .map(|(i, r)| f(i, r))
        .collect();
    #[cfg(not(feature = "std"))]
    let results: Vec<Result<()>> = data
        .chunks_mut(row_len)
        .enumerate()
        .map(|(i, r)| f(i, r))
        .collect();
    results.into_iter().collect()
}

/// Like [`try_rows`] for two row-aligned buffers.
pub(crate) fn try_rows2<A, B, F>(
    a: &mut [A],
    a_len: usize,
    b: &mut [B],
    b_len: usize,
    f: F,
) -> Result<()>
where
    A: Send,
    B: Send,
    F: Fn(usize, &mut [A], &mut [B]) -> Result<()> + Sync + Send,
{
    if a_len == 0 || b_len == 0 {
        let rows = a
            .len()
            .checked_div(a_len)
            .or(b.len().checked_div(b_len))
            .unwrap_or(0);
        let mut ea: [A; 0] = [];
        let mut eb: [B; 0] = [];
        for i in 0..rows {
            let ra = if a_len == 0 {
                &mut ea[..]
            } else {
                &mut a[i * a_len..(i + 1) * a_len]
            };
            let rb = if b_len == 0 {
                &mut eb[..]
            } else {
                &mut b[i * b_len..(i + 1) * b_len]
            };
            f(i, ra, rb)?;
        }
        return Ok(());
    }
    #[cfg(feature = "std")]
    let results: Vec<Result<()>> = a
        .par_chunks_mut(a_len)
        .zip(b.par_chunks_mut(b_len))
        .enumerate()
        .map(|(i, (ra, rb))| f(i, ra, rb))
        .collect();
    #[cfg(not(feature = "std"))]
    let results: Vec<Result<()>> = a
        .chunks_mut(a_len)
        .zip(b.chunks_mut(b_len))
        .enumerate()
        .map(|(i, (ra, rb))| f(i, ra, rb))
        .collect();
    results.into_iter().collect()
}

/// `(0..n).map(f).collect()`, in order.
pub(crate) fn map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "std")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "std"))]
    {
        (0..n).map(f).collect()
    }
}

/// Block-wise partial results over `0..n` in blocks of [`BLOCK`], returned in
/// block order for a sequential fold.
pub(crate) fn blocks<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(core::ops::Range<usize>) -> R + Sync + Send,
{
    let nb = n.div_ceil(BLOCK);
    map(nb, |b| f(b * BLOCK..((b + 1) * BLOCK).min(n)))
}
