use rayon::prelude::*;
use rayon::ThreadPool;
use steerkit_core::exec::ParMap;

use crate::error::{AppError, AppResult};

pub const WORKERS_ENV: &str = "STEERKIT_WORKERS";

/// Thread pool executor; results come back in index order.
pub struct Pool {
    pool: ThreadPool,
    workers: usize,
}

impl Pool {
    pub fn new(workers: usize) -> AppResult<Self> {
        if workers == 0 {
            return Err(AppError::ConfigInvalid("worker count must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| AppError::ConfigInvalid(format!("cannot start {workers} workers: {e}")))?;
        Ok(Self { pool, workers })
    }
}

impl ParMap for Pool {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if self.workers == 1 {
            return (0..n).map(f).collect();
        }
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }

    fn workers(&self) -> usize {
        self.workers
    }
}

/// `STEERKIT_WORKERS` if set, otherwise the available parallelism.
pub fn default_workers() -> AppResult<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .ok_or_else(|| AppError::ConfigInvalid(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}
