//! Index-ordered parallel map.
//!
//! With the `parallel` feature (on by default) work is spread over a rayon
//! pool of the requested size. Without it, or with `workers <= 1`, the map
//! runs sequentially. Output is always in index order, so callers that
//! derive their randomness from the index get identical results either way.

/// Worker count to use when the caller does not specify one.
pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Computes `f(0), f(1), ..., f(len - 1)` on up to `workers` threads.
pub fn map_indexed<T, F>(len: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers > 1 && len > 1 {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                Ok(pool) => return pool.install(|| (0..len).into_par_iter().map(&f).collect()),
                Err(err) => log::warn!("falling back to sequential execution: {err}"),
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
    (0..len).map(f).collect()
}
