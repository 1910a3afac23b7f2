//! Indexed map with a data-parallel implementation and a sequential fallback.
//!
//! All bulk work in the crate (sweep cells, multi-seed envelope runs, Monte
//! Carlo blocks, fuzz batches) is phrased as "evaluate a pure function on
//! indices 0..n and collect results in index order". Because each index owns
//! its random substream and the caller reduces the collected vector
//! sequentially, the parallel and sequential implementations produce
//! bit-identical results; the `parallel` feature only changes wall-clock time.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluate `f` on `0..n`, in parallel when the `parallel` feature is enabled.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Always-sequential variant. Exists so benchmarks can compare the two
/// execution modes within a single build, and as the reference semantics for
/// [`map_indexed`].
pub fn map_indexed_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Which implementation [`map_indexed`] dispatches to in this build.
pub fn active_mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}
