use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{Error, Result};

/// Items handed to a worker pool at a time by the streaming stages.
pub const CHUNK_SIZE: usize = 4096;

/// Bounded worker pool whose map preserves input order.
pub struct Workers {
    pool: Option<ThreadPool>,
}

impl Workers {
    /// `None` uses every available core; `Some(1)` runs inline.
    pub fn new(threads: Option<usize>) -> Result<Self> {
        let pool = match threads {
            Some(0) => return Err(Error::Config("--workers must be at least 1".into())),
            Some(1) => None,
            Some(n) => Some(build(n)?),
            None => Some(build(0)?),
        };
        Ok(Workers { pool })
    }

    pub fn sequential() -> Self {
        Workers { pool: None }
    }

    pub fn map_ordered<T, U, F>(&self, items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Sync + Send,
    {
        match &self.pool {
            None => items.into_iter().map(f).collect(),
            Some(pool) => pool.install(|| items.into_par_iter().map(f).collect()),
        }
    }
}

fn build(n: usize) -> Result<ThreadPool> {
    ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Pulls up to `n` items from `iter`.
pub(crate) fn next_chunk<I: Iterator>(iter: &mut I, n: usize) -> Vec<I::Item> {
    iter.by_ref().take(n).collect()
}
