//! Deterministic parallel map abstraction.
//!
//! Implementations must return `f(0), f(1), …, f(n-1)` in index order, so
//! results never depend on scheduling or worker count. The std companion
//! crate provides a thread-pool implementation.

use alloc::vec::Vec;

pub trait ParMap: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;

    fn workers(&self) -> usize {
        1
    }
}

/// Single-threaded executor.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl ParMap for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
