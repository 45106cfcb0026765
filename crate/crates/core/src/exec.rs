//! Execution environment for independent work items.
//!
//! Training and evaluation fan out over tasks and seeds. The core only
//! needs an order-preserving parallel map; the sequential executor here is
//! the reference, and thread pools plug in from outside.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluates `f(0..n)` and returns the results in index order.
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;

    /// Monotonic seconds for logging, if a clock is available.
    fn seconds(&self) -> Option<f64> {
        None
    }
}

/// Runs every item in order on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
