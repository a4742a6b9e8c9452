use hexplan_core::schedule::Executor;
use rayon::prelude::*;

use crate::error::CliError;

/// Environment variable capping evaluation threads.
pub const THREADS_ENV: &str = "HEXPLAN_THREADS";

/// Runs evaluations on a rayon pool. Results keep input order, so output
/// does not depend on the thread count.
pub struct PoolExecutor {
    pool: rayon::ThreadPool,
}

impl PoolExecutor {
    pub fn with_threads(threads: usize) -> Result<Self, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
        Ok(PoolExecutor { pool })
    }

    /// Reads [`THREADS_ENV`]; unset means one thread per core.
    pub fn from_env() -> Result<Self, CliError> {
        let threads = match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n >= 1 => n,
                _ => return Err(CliError::Invalid(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
            },
            Err(_) => 0,
        };
        Self::with_threads(threads)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `f` inside the pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl Executor for PoolExecutor {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        self.pool.install(|| items.into_par_iter().map(f).collect())
    }
}
