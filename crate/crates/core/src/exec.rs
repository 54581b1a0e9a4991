//! Parallelism seam.
//!
//! Batch operations (decoy generation, multi-game enumeration, reverse
//! diffusion batches, per-sigma table rows) are expressed as maps over an
//! index range. With the default `parallel` feature the map runs on the
//! rayon pool; without it the same code compiles to a plain sequential
//! loop. [`map_indexed_seq`] is always available so benchmarks can compare
//! both paths in one build.
//!
//! Determinism does not depend on the execution mode: every item derives
//! its own RNG stream from (seed, index), so parallel and sequential runs
//! are bit-identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
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

/// Sequential reference path, available regardless of features.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Caps the rayon pool at `n` threads. Call once, before any parallel work;
/// later calls are ignored (rayon's global pool can only be built once).
/// No-op in sequential builds.
#[allow(unused_variables)]
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}
