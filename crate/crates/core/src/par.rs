//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) the map runs on the rayon pool;
//! without it the same call compiles to a plain iterator. Output order is
//! the input order either way, so every downstream reduction sees an
//! identical sequence regardless of the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn pmap<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn pmap<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Configure the global worker pool. `jobs = 0` keeps the default size.
/// A no-op without the `parallel` feature.
pub fn configure_pool(jobs: usize) -> crate::error::Result<()> {
    #[cfg(feature = "parallel")]
    {
        if jobs > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()
                .map_err(|e| crate::error::Error::Config(format!("worker pool: {e}")))?;
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
    }
    Ok(())
}
