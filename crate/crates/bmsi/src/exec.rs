use bmsi_core::sampler::ReplicaExecutor;
use rayon::prelude::*;

use crate::CliError;

/// Runs replicas (or sweep trials) on a private rayon pool.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `threads = None` uses one worker per available core.
    pub fn new(threads: Option<usize>) -> Result<Self, CliError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            if n == 0 {
                return Err(CliError::config("--threads must be at least 1"));
            }
            b = b.num_threads(n);
        }
        let pool = b.build().map_err(|e| CliError::config(format!("thread pool: {e}")))?;
        Ok(RayonExecutor { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl ReplicaExecutor for RayonExecutor {
    fn run_each<T, F>(&self, items: &mut [T], f: F) -> bmsi_core::Result<()>
    where
        T: Send,
        F: Fn(usize, &mut T) -> bmsi_core::Result<()> + Sync + Send,
    {
        // Every item runs; the error of the lowest index wins so the outcome does not
        // depend on scheduling.
        let results: Vec<bmsi_core::Result<()>> =
            self.pool.install(|| items.par_iter_mut().enumerate().map(|(k, t)| f(k, t)).collect());
        results.into_iter().collect()
    }
}
