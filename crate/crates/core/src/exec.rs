//! Execution strategy for the data-parallel loops (pair scoring, folds,
//! per-instance lazy trees).
//!
//! With the `rayon` feature disabled every strategy runs sequentially.
//! Results are always collected in index order, so output never depends on
//! the strategy or the worker count.

#[cfg(feature = "rayon")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "rayon") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Evaluates `f(0), f(1), .., f(n - 1)` and returns the results in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "rayon")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Like [`Exec::map_range`], stopping at the first error.
    pub fn try_map_range<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        match self {
            #[cfg(feature = "rayon")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }
}

/// Mixes a base seed with a path of indices (fold, instance, ...) into an
/// independent per-task seed. Stable across platforms and worker counts.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    state
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
