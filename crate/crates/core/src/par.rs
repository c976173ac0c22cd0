//! Data-parallel helpers. With the `parallel` feature these run on the rayon
//! pool; without it they are plain sequential loops with identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Calls `f(row_index, row)` for every `width`-sized row of `buf`.
#[cfg(feature = "parallel")]
pub(crate) fn for_each_row<T, F>(buf: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    buf.par_chunks_mut(width).enumerate().for_each(|(y, row)| f(y, row));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_row<T, F>(buf: &mut [T], width: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    buf.chunks_mut(width).enumerate().for_each(|(y, row)| f(y, row));
}
