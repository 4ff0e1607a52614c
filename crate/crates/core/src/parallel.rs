//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool;
//! without it every helper runs on the calling thread. Results never depend
//! on which path ran: work is split into fixed-size chunks whose boundaries
//! do not depend on the thread count, and partial results are always combined
//! in chunk order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used for ordered reductions over shots.
pub const CHUNK: usize = 1024;

/// Map `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Map `f` over the chunks `[start, end)` of `0..n` and return the per-chunk
/// results in chunk order. Chunk boundaries are multiples of `chunk`.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    map_indexed(count, |c| {
        let start = c * chunk;
        f(start, (start + chunk).min(n))
    })
}

/// Fill `out` by calling `f(index, slot)` on fixed-width rows.
pub fn fill_rows<T, F>(out: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
}

/// Whether this build runs the helpers on the rayon pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
