//! Parallel iteration helpers.
//!
//! Every data-parallel loop in the crate goes through [`map_collect`] so the
//! sequential fallback (built without the `parallel` feature) shares one code
//! path with the rayon version. Output order always matches input order, which
//! keeps emitted files byte-stable regardless of thread scheduling.

/// Map `f` over `items`, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn map_collect<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Sequential variant kept unconditionally so benchmarks can compare both
/// paths within one build.
pub fn map_collect_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}
