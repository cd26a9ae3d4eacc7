use rayon::prelude::*;

use crate::error::{invalid, Result};

/// Map `f` over `0..n` on `workers` threads, returning results in index order.
pub fn map_indexed<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers == 0 {
        return Err(invalid("workers", "must be at least 1"));
    }
    if workers == 1 {
        return Ok((0..n).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| invalid("workers", e.to_string()))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

/// Like [`map_indexed`] for fallible work; the first error in index order wins.
pub fn try_map_indexed<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_indexed(workers, n, f)?.into_iter().collect()
}
