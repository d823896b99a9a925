//! Thread-pool executor for gradient chunks, folds and grid points.

use dexfm_core::training::{Executor, Sequential};
use rayon::prelude::*;

/// Runs work on the calling thread for one job, or on a dedicated rayon
/// pool. Results come back in index order either way, so the choice never
/// changes a number.
pub enum Jobs {
    Sequential,
    Pool(rayon::ThreadPool),
}

impl Jobs {
    pub fn new(jobs: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        if jobs <= 1 {
            return Ok(Jobs::Sequential);
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map(Jobs::Pool)
    }

    pub fn threads(&self) -> usize {
        match self {
            Jobs::Sequential => 1,
            Jobs::Pool(p) => p.current_num_threads(),
        }
    }
}

impl Executor for Jobs {
    fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            Jobs::Sequential => Sequential.map(n, f),
            Jobs::Pool(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_preserves_order() {
        let jobs = Jobs::new(3).unwrap();
        assert_eq!(jobs.threads(), 3);
        let out = jobs.map(100, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        assert!(matches!(Jobs::new(1).unwrap(), Jobs::Sequential));
    }
}
