//! Data-parallel helpers with a sequential fallback.
//!
//! Work items are indexed and every closure derives its randomness from its
//! index, so [`Exec::Parallel`] and [`Exec::Sequential`] return identical
//! vectors. Without the `parallel` feature both variants run sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

/// `(0..n).map(f)` collected in index order.
pub fn map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Exec::Sequential => (0..n).map(f).collect(),
        Exec::Parallel => par_map_range(n, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Run `f` on a pool of `workers` threads. `workers == 0` uses the global
/// pool. A no-op wrapper without the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn with_workers<T, F>(workers: usize, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<T, F>(_workers: usize, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    f()
}
