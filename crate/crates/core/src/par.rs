//! Data-parallel map helpers with a sequential fallback.
//!
//! Every parallel site in the crate goes through these functions. They
//! collect in input order, so results are identical whether the `parallel`
//! feature is enabled, how many rayon workers exist, or whether the
//! always-sequential variants are used. Seeded work derives one seed per
//! unit *before* dispatch, never from shared RNG state.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Ordered map over a slice. Parallel when the `parallel` feature is on.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Ordered map over `0..n`. Parallel when the `parallel` feature is on.
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
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

/// Always-sequential counterpart of [`map_slice`], kept for benchmarks and
/// for callers that need to avoid pool overhead on tiny inputs.
pub fn map_slice_seq<T, U, F>(items: &[T], mut f: F) -> Vec<U>
where
    F: FnMut(&T) -> U,
{
    items.iter().map(&mut f).collect()
}

/// Always-sequential counterpart of [`map_indices`].
pub fn map_indices_seq<U, F>(n: usize, mut f: F) -> Vec<U>
where
    F: FnMut(usize) -> U,
{
    (0..n).map(&mut f).collect()
}
