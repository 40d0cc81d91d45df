//! Data-parallel map helpers. The `parallel` feature routes through rayon;
//! without it everything runs sequentially. Both paths produce results in
//! input order, so outputs are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map over items, parallel when the `parallel` feature is enabled.
pub fn map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Always-sequential map, kept for benchmarking against the parallel path.
pub fn map_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}
