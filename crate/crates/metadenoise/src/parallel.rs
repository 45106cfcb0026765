//! Thread-pool executor.

use std::time::Instant;

use metadenoise_core::Executor;
use rayon::prelude::*;

/// Runs work items on a rayon pool. Results come back in index order, so
/// outputs do not depend on the worker count.
pub struct Pool {
    pool: rayon::ThreadPool,
    start: Instant,
}

impl Pool {
    /// `workers == 0` uses one thread per core.
    pub fn new(workers: usize) -> crate::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| crate::Error::Usage(format!("cannot start {} workers: {}", workers, e)))?;
        Ok(Pool { pool, start: Instant::now() })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }

    fn seconds(&self) -> Option<f64> {
        Some(self.start.elapsed().as_secs_f64())
    }
}
