use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use spikenm_core::pipeline::BatchExecutor;

use crate::error::{Error, Result};

/// Sample-parallel executor on a dedicated pool. Results are collected in
/// index order, so runs match [`spikenm_core::pipeline::Sequential`] bit for bit.
pub struct Rayon {
    pool: ThreadPool,
}

impl Rayon {
    /// `threads = None` uses every available core.
    pub fn new(threads: Option<usize>) -> Result<Self> {
        let mut b = ThreadPoolBuilder::new();
        if let Some(n) = threads {
            if n == 0 {
                return Err(Error::Config("--threads must be at least 1".into()));
            }
            b = b.num_threads(n);
        }
        let pool = b.build().map_err(|e| Error::Config(format!("thread pool: {}", e)))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl BatchExecutor for Rayon {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}
